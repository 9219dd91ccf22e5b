#include "mde/losses/mde_losses.hpp"

#include <algorithm>
#include <cmath>

#include "mde/core/errors.hpp"

namespace mde {

double bce(const Tensor& prediction, const Tensor& target, double clamp_eps) {
    if (!prediction.same_shape(target))
        throw ShapeMismatchError("bce: " + prediction.shape_str() + " vs " + target.shape_str());
    const std::size_t n = prediction.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(prediction[i], clamp_eps, 1.0 - clamp_eps);
        const double s = target[i];
        acc += -(s * std::log(p) + (1.0 - s) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(n);
}

double oal(const std::vector<ImplicitSegmentation>& segmentations,
           const std::vector<Tensor>& masks, double clamp_eps, double degenerate_eps,
           std::vector<double>* per_object) {
    if (segmentations.empty() || segmentations.size() != masks.size())
        throw ShapeMismatchError("oal: needs matching non-empty segmentation/mask lists");
    if (per_object)
        per_object->clear();
    double total = 0.0;
    for (std::size_t i = 0; i < segmentations.size(); ++i) {
        const Tensor& shat = segmentations[i].map;
        const Tensor& s = masks[i];
        double mx = 0.0;
        for (double v : shat.vec())
            mx = std::max(mx, v);
        if (mx < degenerate_eps)
            throw DegenerateSegmentationError("segmentation for object " + std::to_string(i) +
                                              " is identically ~0");
        Tensor normalized(shat.shape());
        for (std::size_t j = 0; j < shat.numel(); ++j)
            normalized[j] = shat[j] / mx;
        const double value = bce(shat, s, clamp_eps) + bce(normalized, s, clamp_eps);
        if (per_object)
            per_object->push_back(value);
        total += value;
    }
    return total;
}

double ccl(const Tensor& edit_attn, const std::vector<Tensor>& common_attns, const Tensor& mask,
           CclReduction reduction, double guard_eps) {
    if (!edit_attn.same_shape(mask))
        throw ShapeMismatchError("ccl: edit map " + edit_attn.shape_str() + " vs mask " +
                                 mask.shape_str());
    Tensor common(edit_attn.shape());
    for (const auto& c : common_attns) {
        if (!c.same_shape(edit_attn))
            throw ShapeMismatchError("ccl: common map shape " + c.shape_str());
        for (std::size_t i = 0; i < common.numel(); ++i)
            common[i] += c[i];
    }
    std::size_t n_masked = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] == 0.0)
            continue;
        ++n_masked;
        const double e = edit_attn[i];
        const double r = e / (e + common[i] + guard_eps);
        acc += (1.0 - r) * (1.0 - r);
    }
    if (n_masked == 0)
        throw EmptyMaskError("ccl mask has no set pixel");
    return reduction == CclReduction::masked_mean ? acc / static_cast<double>(n_masked) : acc;
}

LossBreakdown total_loss(double oal_value, double ccl_value, const GuidanceConfig& config) {
    if (oal_value < 0.0 || ccl_value < 0.0)
        throw Error("loss terms must be non-negative");
    LossBreakdown b;
    b.oal = oal_value;
    b.ccl = ccl_value;
    b.total = config.lambda1 * oal_value + config.lambda2 * ccl_value;
    return b;
}

Tensor masked_merge(const Tensor& z, const Tensor& grad, const Tensor& mask, double delta) {
    if (!z.same_shape(grad))
        throw ShapeMismatchError("masked_merge: z " + z.shape_str() + " vs grad " +
                                 grad.shape_str());
    const int channels = z.dim() == 3 ? z.size(0) : 1;
    const std::size_t hw = z.numel() / static_cast<std::size_t>(channels);
    if (mask.numel() != hw)
        throw ShapeMismatchError("masked_merge: mask " + mask.shape_str());
    Tensor out = z;
    for (int c = 0; c < channels; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (mask[i] != 0.0)
                out[base + i] = z[base + i] - delta * grad[base + i];
    }
    return out;
}

}  // namespace mde
