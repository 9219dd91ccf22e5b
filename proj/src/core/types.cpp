#include "mde/core/types.hpp"

#include <algorithm>
#include <cmath>

#include "mde/kernels/kernels.hpp"

namespace mde {

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

void LatentGrid::check_finite() const {
    if (!data.all_finite())
        throw Error("latent grid contains non-finite values at timestep " +
                    std::to_string(timestep));
}

void AttentionStack::validate(double tol) const {
    for (const auto& entry : maps) {
        const int rows = entry.h * entry.w;
        if (entry.map.dim() != 2 || entry.map.size(0) != rows || entry.map.size(1) != n_tokens)
            throw ShapeMismatchError("attention map shape " + entry.map.shape_str() +
                                     " does not match [" + std::to_string(rows) + "," +
                                     std::to_string(n_tokens) + "]");
        for (int r = 0; r < rows; ++r) {
            const double* row = entry.map.data() + static_cast<std::size_t>(r) * n_tokens;
            double s = kernels::sum(row, static_cast<std::size_t>(n_tokens));
            if (std::fabs(s - 1.0) > tol)
                throw Error("attention row does not sum to 1 (got " + std::to_string(s) + ")");
            for (int c = 0; c < n_tokens; ++c)
                if (row[c] < -tol || row[c] > 1.0 + tol)
                    throw Error("attention entry out of [0,1]");
        }
    }
}

bool TokenAlignment::is_new(int tgt_index) const {
    return std::find(new_tokens.begin(), new_tokens.end(), tgt_index) != new_tokens.end();
}

void TokenAlignment::validate() const {
    const int n_tgt = static_cast<int>(tgt_ids.size());
    std::vector<int> seen(static_cast<std::size_t>(n_tgt), 0);
    for (const auto& [s, t] : shared) {
        if (s < 0 || s >= static_cast<int>(src_ids.size()) || t < 0 || t >= n_tgt)
            throw AlignmentOutOfRangeError("shared pair index out of range");
        seen[static_cast<std::size_t>(t)]++;
    }
    for (int t : new_tokens) {
        if (t < 0 || t >= n_tgt)
            throw AlignmentOutOfRangeError("new-token index out of range");
        seen[static_cast<std::size_t>(t)]++;
    }
    for (int t = 0; t < n_tgt; ++t)
        if (seen[static_cast<std::size_t>(t)] != 1)
            throw AlignmentOutOfRangeError("target index " + std::to_string(t) +
                                           " classified " + std::to_string(seen[t]) + " times");
}

void EditSpec::validate(const TokenAlignment& alignment) const {
    if (mask.dim() != 2)
        throw ShapeMismatchError("edit mask must be 2-D, got " + mask.shape_str());
    bool any = false;
    for (double v : mask.vec()) {
        if (v != 0.0 && v != 1.0)
            throw Error("edit mask must be binary");
        any = any || v == 1.0;
    }
    if (!any)
        throw EmptyMaskError("edit mask '" + label + "' has no set pixel");
    if (target_token_indices.empty())
        throw Error("edit spec '" + label + "' has no target tokens");
    for (int idx : target_token_indices)
        if (!alignment.is_new(idx))
            throw AlignmentOutOfRangeError("edit token index " + std::to_string(idx) +
                                           " is not a new token of the target prompt");
}

Tensor union_mask(const std::vector<EditSpec>& edits, int h, int w) {
    Tensor m({h, w}, 0.0);
    for (const auto& e : edits) {
        if (e.mask.size(0) != h || e.mask.size(1) != w)
            throw ShapeMismatchError("edit mask " + e.mask.shape_str() + " vs expected [" +
                                     std::to_string(h) + "," + std::to_string(w) + "]");
        for (std::size_t i = 0; i < m.numel(); ++i)
            m[i] = (m[i] != 0.0 || e.mask[i] != 0.0) ? 1.0 : 0.0;
    }
    return m;
}

Tensor background_mask(const Tensor& union_mask) {
    Tensor b = union_mask;
    for (std::size_t i = 0; i < b.numel(); ++i)
        b[i] = union_mask[i] == 0.0 ? 1.0 : 0.0;
    return b;
}

void GuidanceConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0)
        throw Error("loss weights must be non-negative");
    if (delta <= 0)
        throw Error("gradient step size must be positive");
    if (total_steps < 1)
        throw Error("total_steps must be >= 1");
    if (opt_window < 0 || opt_window > total_steps)
        throw Error("opt_window must lie in [0, total_steps]");
    if (inner_iters < 0)
        throw Error("inner_iters must be >= 0");
    if (guidance_scale <= 0)
        throw Error("guidance scale must be positive");
}

}  // namespace mde
