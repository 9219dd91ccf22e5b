#pragma once

#include <string>
#include <vector>

#include "mde/core/errors.hpp"
#include "mde/core/tensor.hpp"

namespace mde {

// Latent state z_t at one diffusion timestep, [channels, height, width].
struct LatentGrid {
    Tensor data;
    int timestep = 0;

    int channels() const { return data.size(0); }
    int height() const { return data.size(1); }
    int width() const { return data.size(2); }
    void check_finite() const;
};

// One captured cross-attention map: [h*w, n_tokens], rows softmax-normalized.
struct AttentionMapEntry {
    int layer_id = 0;
    int head = 0;
    int h = 0;
    int w = 0;
    Tensor map;
};

// All cross-attention maps captured from one denoiser forward.
struct AttentionStack {
    std::vector<AttentionMapEntry> maps;
    int n_tokens = 0;

    // Rows must sum to 1 within tol and entries must lie in [0,1].
    void validate(double tol = 1e-6) const;
};

// Source/target prompt token correspondence. Every target index is
// classified exactly once: either paired with a source index or new.
struct TokenAlignment {
    std::vector<std::pair<int, int>> shared;  // (src_index, tgt_index)
    std::vector<int> new_tokens;              // target indices
    std::vector<int> src_ids;
    std::vector<int> tgt_ids;

    bool is_new(int tgt_index) const;
    void validate() const;
};

// One edit target: binary region mask plus the target-prompt token indices
// that describe the new content for that region.
struct EditSpec {
    Tensor mask;  // [H, W], entries in {0,1}
    std::vector<int> target_token_indices;
    std::string label;

    void validate(const TokenAlignment& alignment) const;
};

enum class MaskRole { per_object, union_of_edits, background };

struct RegionMask {
    Tensor data;
    MaskRole role = MaskRole::per_object;
};

// Union of all edit masks (logical OR).
Tensor union_mask(const std::vector<EditSpec>& edits, int h, int w);
// Complement of the union mask.
Tensor background_mask(const Tensor& union_mask);

enum class CclReduction { masked_mean, masked_sum };

// Which branch an attention-map column is taken from during injection.
struct ColumnSource {
    enum class Branch { reconstruction, editing };
    Branch branch = Branch::editing;
    int col = 0;  // column index within the source branch's map
};

struct GuidanceConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.25;
    double delta = 0.05;  // latent gradient step size
    int opt_window = 20;  // earliest denoising steps that get optimized
    int inner_iters = 1;  // optimization iterations per timestep
    int total_steps = 50;
    double guidance_scale = 3.0;
    CclReduction ccl_reduction = CclReduction::masked_mean;

    void validate() const;
};

}  // namespace mde
