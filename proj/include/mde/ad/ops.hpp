#pragma once

#include <vector>

#include "mde/ad/graph.hpp"
#include "mde/core/types.hpp"

namespace mde::ad::ops {

// Elementwise (same shape unless stated).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
// ca*a + cb*b
Var scale_add(const Var& a, double ca, const Var& b, double cb);
Var silu(const Var& x);

// Matrix products (row-major 2-D).
Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k] x [n,k]^T

// y[r,dout] = x[r,din] * w[dout,din]^T + b[dout]
Var linear(const Var& x, const Var& w, const Var& b);

// x [C,H,W], w [O,C,kh,kw], b [O]; zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var softmax_rows(const Var& x);

// Shape plumbing.
Var reshape(const Var& x, std::vector<int> shape);
Var chw_to_rows(const Var& x);                        // [C,H,W] -> [H*W, C]
Var rows_to_chw(const Var& x, int c, int h, int w);   // inverse
Var slice_cols(const Var& x, int c0, int c1);
Var concat_cols(const std::vector<Var>& xs);
Var concat_chw(const Var& a, const Var& b);
Var upsample_nearest2x(const Var& x);
Var add_channel_bias(const Var& x, const Var& b);     // x [C,H,W], b [C]

// Half-pixel-center bilinear resize of a single 2-D grid.
Var bilinear_resize(const Var& x, int out_h, int out_w);

Var embed_rows(const Var& table, const std::vector<int>& ids);

// Reductions to scalar.
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse_vs(const Var& a, const Tensor& target);

// Same-shape list combinators.
Var stack_mean(const std::vector<Var>& xs);
Var stack_sum(const std::vector<Var>& xs);

// map [n_pos, n_tok] -> column `col` as an [h,w] grid.
Var slice_col_as_grid(const Var& map, int col, int h, int w);

// Attention-map column substitution: output column j takes the editing
// branch's column for new tokens and the (constant) reconstruction branch's
// column for shared tokens. Gradient flows only through surviving editing
// columns.
Var inject_columns(const Var& edit_map, const Tensor& recon_map,
                   const std::vector<ColumnSource>& sources);

// Mean binary cross-entropy against a fixed binary mask, prediction clamped
// to [eps, 1-eps] (clamp has zero subgradient outside the open interval).
Var bce_vs_mask(const Var& pred, const Tensor& target, double eps);

// x / max(x) for non-negative maps; throws DegenerateSegmentationError when
// max(x) < degenerate_eps. Backward includes the max-argument path.
Var div_by_max(const Var& x, double degenerate_eps);

// Masked attention-ratio deficit: reduce over pixels where mask==1 of
// (1 - e/(e + common + guard))^2, mean or sum reduction.
Var ccl_deficit(const Var& edit, const Tensor& common_sum, const Tensor& mask,
                double guard_eps, bool mean_reduction);

// Mean softmax cross-entropy of row logits against integer labels.
Var ce_vs_labels(const Var& logits, const std::vector<int>& labels);

}  // namespace mde::ad::ops

namespace mde {

// Per-target-token column routing derived from an alignment; shared tokens
// pull from the reconstruction branch, new tokens keep the editing branch.
std::vector<ColumnSource> column_sources(const TokenAlignment& alignment);

}  // namespace mde
