#include "mde/attention/control.hpp"

#include <cmath>

#include "mde/core/errors.hpp"
#include "mde/core/resize.hpp"
#include "mde/core/vocab.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde {

Tensor cross_attention(const Tensor& q, const Tensor& k) {
    if (q.dim() != 2 || k.dim() != 2 || q.size(1) != k.size(1) || k.size(1) < 1)
        throw ShapeMismatchError("cross_attention: Q " + q.shape_str() + ", K " + k.shape_str());
    const int n_pos = q.size(0), n_tok = k.size(0), dk = q.size(1);
    Tensor scores({n_pos, n_tok});
    kernels::matmul_nt(q.data(), k.data(), scores.data(), static_cast<std::size_t>(n_pos),
                       static_cast<std::size_t>(dk), static_cast<std::size_t>(n_tok));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int r = 0; r < n_pos; ++r) {
        double* row = scores.data() + static_cast<std::size_t>(r) * n_tok;
        double mx = row[0] * inv_sqrt;
        for (int c = 0; c < n_tok; ++c) {
            row[c] *= inv_sqrt;
            mx = std::max(mx, row[c]);
        }
        double denom = 0.0;
        for (int c = 0; c < n_tok; ++c) {
            row[c] = std::exp(row[c] - mx);
            denom += row[c];
        }
        kernels::scale(row, 1.0 / denom, row, static_cast<std::size_t>(n_tok));
    }
    return scores;
}

AttentionStack inject(const AttentionStack& recon, const AttentionStack& edit,
                      const TokenAlignment& alignment) {
    alignment.validate();
    if (recon.maps.size() != edit.maps.size())
        throw ShapeMismatchError("inject: stacks have different map counts");
    if (recon.n_tokens != static_cast<int>(alignment.src_ids.size()) ||
        edit.n_tokens != static_cast<int>(alignment.tgt_ids.size()))
        throw AlignmentOutOfRangeError("inject: stack token counts do not match the alignment");

    const auto sources = column_sources(alignment);
    AttentionStack out;
    out.n_tokens = edit.n_tokens;
    out.maps.reserve(edit.maps.size());
    for (std::size_t m = 0; m < edit.maps.size(); ++m) {
        const auto& re = recon.maps[m];
        const auto& ee = edit.maps[m];
        if (re.layer_id != ee.layer_id || re.head != ee.head || re.h != ee.h || re.w != ee.w)
            throw ShapeMismatchError("inject: stack layer structure differs at entry " +
                                     std::to_string(m));
        AttentionMapEntry oe;
        oe.layer_id = ee.layer_id;
        oe.head = ee.head;
        oe.h = ee.h;
        oe.w = ee.w;
        oe.map = Tensor({ee.h * ee.w, out.n_tokens});
        const int rows = ee.h * ee.w;
        for (int j = 0; j < out.n_tokens; ++j) {
            const ColumnSource& s = sources[static_cast<std::size_t>(j)];
            const Tensor& src_map =
                s.branch == ColumnSource::Branch::reconstruction ? re.map : ee.map;
            if (s.col >= src_map.size(1))
                throw AlignmentOutOfRangeError("inject: source column out of range");
            for (int r = 0; r < rows; ++r)
                oe.map.at(r, j) = src_map.at(r, s.col);
        }
        out.maps.push_back(std::move(oe));
    }
    return out;
}

ImplicitSegmentation implicit_segmentation(const AttentionStack& stack, int token_index,
                                           int out_h, int out_w) {
    if (stack.maps.empty())
        throw Error("implicit_segmentation: empty stack");
    if (token_index < 0 || token_index >= stack.n_tokens)
        throw AlignmentOutOfRangeError("implicit_segmentation: token index " +
                                       std::to_string(token_index));
    Tensor acc({out_h, out_w});
    for (const auto& entry : stack.maps) {
        Tensor grid({entry.h, entry.w});
        for (int r = 0; r < entry.h * entry.w; ++r)
            grid[static_cast<std::size_t>(r)] = entry.map.at(r, token_index);
        const Tensor resized = bilinear_resize_plain(grid, out_h, out_w);
        kernels::add(acc.data(), resized.data(), acc.data(), acc.numel());
    }
    kernels::scale(acc.data(), 1.0 / static_cast<double>(stack.maps.size()), acc.data(),
                   acc.numel());
    ImplicitSegmentation seg;
    seg.map = std::move(acc);
    seg.token_index = token_index;
    return seg;
}

std::vector<std::pair<int, int>> shared_content_pairs(const TokenAlignment& alignment) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& [src, tgt] : alignment.shared)
        if (!is_special_token(alignment.src_ids[static_cast<std::size_t>(src)]))
            pairs.emplace_back(src, tgt);
    return pairs;
}

}  // namespace mde
