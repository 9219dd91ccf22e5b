#pragma once

#include <algorithm>
#include <vector>

#include "mde/core/tensor.hpp"

namespace mde {

struct BilinearTap {
    int idx0, idx1, idx2, idx3;
    double w0, w1, w2, w3;
};

// Half-pixel-center source taps, edge clamped; shared by the plain and the
// differentiable resize so both interpolate identically.
inline std::vector<BilinearTap> bilinear_taps(int h, int w, int oh, int ow) {
    std::vector<BilinearTap> taps(static_cast<std::size_t>(oh) * ow);
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            BilinearTap& t = taps[static_cast<std::size_t>(y) * ow + x];
            t.idx0 = y0 * w + x0;
            t.idx1 = y0 * w + x1;
            t.idx2 = y1 * w + x0;
            t.idx3 = y1 * w + x1;
            t.w0 = (1 - wy) * (1 - wx);
            t.w1 = (1 - wy) * wx;
            t.w2 = wy * (1 - wx);
            t.w3 = wy * wx;
        }
    }
    return taps;
}

inline Tensor bilinear_resize_plain(const Tensor& x, int oh, int ow) {
    const auto taps = bilinear_taps(x.size(0), x.size(1), oh, ow);
    Tensor out({oh, ow});
    const double* src = x.data();
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const BilinearTap& t = taps[i];
        out[i] = t.w0 * src[t.idx0] + t.w1 * src[t.idx1] + t.w2 * src[t.idx2] + t.w3 * src[t.idx3];
    }
    return out;
}

}  // namespace mde
