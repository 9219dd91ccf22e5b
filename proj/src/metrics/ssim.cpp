#include <cmath>
#include <vector>

#include "mde/core/errors.hpp"
#include "mde/kernels/kernels.hpp"
#include "mde/metrics/metrics.hpp"

namespace mde {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kWindow);
        const int half = kWindow / 2;
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - half;
            v[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += v[static_cast<std::size_t>(i)];
        }
        for (auto& x : v)
            x /= sum;
        return v;
    }();
    return k;
}

// Separable Gaussian filter with replicate padding, [H,W] plane.
Tensor gaussian_filter(const Tensor& img) {
    const int h = img.size(0), w = img.size(1);
    const auto& k = gaussian_kernel();
    const int half = kWindow / 2;
    Tensor tmp({h, w}), out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += k[static_cast<std::size_t>(i + half)] * img.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += k[static_cast<std::size_t>(i + half)] * tmp.at(yy, x);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

Tensor channel_plane(const Tensor& img, int c) {
    const int h = img.size(1), w = img.size(2);
    Tensor plane({h, w});
    const double* src = img.data() + static_cast<std::size_t>(c) * h * w;
    std::copy(src, src + static_cast<std::size_t>(h) * w, plane.data());
    return plane;
}

Tensor ssim_plane(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.numel();
    Tensor a_sq(a.shape()), b_sq(a.shape()), ab(a.shape());
    kernels::hadamard(a.data(), a.data(), a_sq.data(), n);
    kernels::hadamard(b.data(), b.data(), b_sq.data(), n);
    kernels::hadamard(a.data(), b.data(), ab.data(), n);

    const Tensor mu1 = gaussian_filter(a);
    const Tensor mu2 = gaussian_filter(b);
    const Tensor s11 = gaussian_filter(a_sq);
    const Tensor s22 = gaussian_filter(b_sq);
    const Tensor s12 = gaussian_filter(ab);

    Tensor out(a.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double m1 = mu1[i], m2 = mu2[i];
        const double var1 = s11[i] - m1 * m1;
        const double var2 = s22[i] - m2 * m2;
        const double cov = s12[i] - m1 * m2;
        out[i] = ((2.0 * m1 * m2 + kC1) * (2.0 * cov + kC2)) /
                 ((m1 * m1 + m2 * m2 + kC1) * (var1 + var2 + kC2));
    }
    return out;
}

}  // namespace

Tensor ssim_map(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeMismatchError("ssim: " + a.shape_str() + " vs " + b.shape_str());
    if (a.dim() == 2)
        return ssim_plane(a, b);
    if (a.dim() != 3)
        throw ShapeMismatchError("ssim expects [H,W] or [C,H,W]");
    const int c = a.size(0);
    Tensor acc({a.size(1), a.size(2)});
    for (int ch = 0; ch < c; ++ch) {
        const Tensor plane = ssim_plane(channel_plane(a, ch), channel_plane(b, ch));
        kernels::add(acc.data(), plane.data(), acc.data(), acc.numel());
    }
    kernels::scale(acc.data(), 1.0 / c, acc.data(), acc.numel());
    return acc;
}

double bg_ssim(const Tensor& original, const Tensor& edited, const Tensor& background_mask) {
    const Tensor map = ssim_map(original, edited);
    if (map.numel() != background_mask.numel())
        throw ShapeMismatchError("bg_ssim: mask " + background_mask.shape_str());
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < map.numel(); ++i) {
        if (background_mask[i] != 0.0) {
            acc += map[i];
            ++count;
        }
    }
    if (count == 0)
        throw EmptyMaskError("background mask has no set pixel");
    return acc / static_cast<double>(count);
}

}  // namespace mde
