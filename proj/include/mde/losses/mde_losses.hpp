#pragma once

#include <vector>

#include "mde/attention/control.hpp"
#include "mde/core/types.hpp"

namespace mde {

struct LossBreakdown {
    double oal = 0.0;
    double ccl = 0.0;
    double total = 0.0;
    std::vector<double> per_object_oal;
};

// Mean over pixels of -[s ln p + (1-s) ln(1-p)], prediction clamped to
// [eps, 1-eps].
double bce(const Tensor& prediction, const Tensor& target, double clamp_eps = 1e-6);

// Per object: bce(S_hat, S) + bce(S_hat / max(S_hat), S), summed over
// objects. Throws DegenerateSegmentationError when a map's max falls below
// degenerate_eps.
double oal(const std::vector<ImplicitSegmentation>& segmentations,
           const std::vector<Tensor>& masks, double clamp_eps = 1e-6,
           double degenerate_eps = 1e-8, std::vector<double>* per_object = nullptr);

// Masked reduction of (1 - e/(e + sum_j common_j + guard))^2; edit-token
// attention already summed into edit_attn by the caller when an object has
// several edit tokens.
double ccl(const Tensor& edit_attn, const std::vector<Tensor>& common_attns, const Tensor& mask,
           CclReduction reduction = CclReduction::masked_mean, double guard_eps = 1e-8);

LossBreakdown total_loss(double oal_value, double ccl_value, const GuidanceConfig& config);

// Region-confined latent update: out = M (z - delta*grad) + (1-M) z. The
// mask is [H,W] and broadcasts over channels; coordinates outside the mask
// are copied bit-exactly.
Tensor masked_merge(const Tensor& z, const Tensor& grad, const Tensor& mask, double delta);

}  // namespace mde
