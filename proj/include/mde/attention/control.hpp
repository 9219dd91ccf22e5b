#pragma once

#include <vector>

#include "mde/attention/recorder.hpp"
#include "mde/core/types.hpp"

namespace mde {

// Softmax(Q K^T / sqrt(d_k)) with row normalization; Q [n_pos, d_k],
// K [n_tokens, d_k].
Tensor cross_attention(const Tensor& q, const Tensor& k);

// Column substitution over a full stack: shared target columns copy the
// reconstruction branch's source column, new-token columns keep the editing
// branch. Requires matching layer structure.
AttentionStack inject(const AttentionStack& recon, const AttentionStack& edit,
                      const TokenAlignment& alignment);

struct ImplicitSegmentation {
    Tensor map;  // [H,W] in [0,1]
    int token_index = 0;
};

// Token column of every map, reshaped to its grid, bilinearly resized to
// the target shape, then averaged over all layers and heads.
ImplicitSegmentation implicit_segmentation(const AttentionStack& stack, int token_index,
                                           int out_h, int out_w);

// Shared-content-token indices (special tokens excluded) as
// (src_col, tgt_col) pairs; the common-attention set for the ratio loss.
std::vector<std::pair<int, int>> shared_content_pairs(const TokenAlignment& alignment);

}  // namespace mde
