#include "mde/pipeline/edit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mde/ad/ops.hpp"
#include "mde/attention/control.hpp"
#include "mde/io/image.hpp"
#include "mde/kernels/kernels.hpp"
#include "mde/sampling/ddim.hpp"

namespace fs = std::filesystem;

namespace mde {

namespace ops = mde::ad::ops;
using ad::Var;

EditSession make_session(InversionTrajectory trajectory, TokenAlignment alignment,
                         std::vector<EditSpec> edits, GuidanceConfig config, int mask_h,
                         int mask_w) {
    trajectory.validate();
    alignment.validate();
    config.validate();
    if (trajectory.prompt_ids != alignment.src_ids)
        throw Error("trajectory prompt does not match the alignment's source prompt");
    if (trajectory.steps() != config.total_steps)
        throw Error("trajectory has " + std::to_string(trajectory.steps()) +
                    " steps, config expects " + std::to_string(config.total_steps));
    for (const auto& e : edits)
        e.validate(alignment);

    EditSession s;
    s.union_mask = edits.empty() ? Tensor({mask_h, mask_w}, 0.0)
                                 : union_mask(edits, mask_h, mask_w);
    s.trajectory = std::move(trajectory);
    s.alignment = std::move(alignment);
    s.edits = std::move(edits);
    s.config = config;
    return s;
}

EditPipeline::EditPipeline(const ToyDenoiser& backend, GuidanceConfig config)
    : backend_(backend), config_(config) {
    config_.validate();
}

InversionTrajectory EditPipeline::invert(const Tensor& image01,
                                         const std::vector<int>& prompt_ids,
                                         const NtiConfig& nti) const {
    InversionTrajectory traj = ddim_invert(backend_, image01, prompt_ids, config_.total_steps);
    nti_optimize(backend_, traj, nti);
    return traj;
}

namespace {

struct ObjectLossVars {
    Var oal_term;
    Var ccl_term;
};

// Differentiable twin of implicit_segmentation over captured maps.
Var segmentation_var(const std::vector<AttnCapture>& captures, int token_index, int out_h,
                     int out_w) {
    std::vector<Var> resized;
    resized.reserve(captures.size());
    for (const auto& c : captures)
        resized.push_back(ops::bilinear_resize(
            ops::slice_col_as_grid(c.map, token_index, c.h, c.w), out_h, out_w));
    return ops::stack_mean(resized);
}

void dump_attention_heatmaps(const std::string& dir, int step_index, const AttentionStack& stack,
                             const TokenAlignment& alignment, const Vocabulary& vocab, int h,
                             int w) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "step_%03d", step_index);
    const fs::path step_dir = fs::path(dir) / "attn" / buf;
    fs::create_directories(step_dir);
    for (std::size_t j = 0; j < alignment.tgt_ids.size(); ++j) {
        const int id = alignment.tgt_ids[j];
        if (is_special_token(id))
            continue;
        ImplicitSegmentation seg =
            implicit_segmentation(stack, static_cast<int>(j), h, w);
        double mx = 0.0;
        for (double v : seg.map.vec())
            mx = std::max(mx, v);
        if (mx > 0.0)
            for (auto& v : seg.map.vec())
                v /= mx;
        write_png_gray01((step_dir / ("token_" + vocab.word_of(id) + ".png")).string(), seg.map);
    }
}

bool background_equal(const Tensor& a, const Tensor& b, const Tensor& mask) {
    const int channels = a.size(0);
    const std::size_t hw = mask.numel();
    for (int c = 0; c < channels; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (mask[i] == 0.0 && a[base + i] != b[base + i])
                return false;
    }
    return true;
}

}  // namespace

EditResult EditPipeline::run(const EditSession& session, const EditOptions& opts) const {
    const GuidanceConfig& cfg = session.config;
    const NoiseSchedule& sched = backend_.schedule();
    const int steps = cfg.total_steps;
    const auto latent_shape = backend_.latent_shape();
    const int lat_h = latent_shape[1], lat_w = latent_shape[2];

    const Tensor ctx_src = backend_.text_encode(session.alignment.src_ids);
    const Tensor ctx_tgt = backend_.text_encode(session.alignment.tgt_ids);
    const Tensor base_null = backend_.text_encode({kBosId, kEosId});
    const auto sources = column_sources(session.alignment);
    const auto common_pairs = shared_content_pairs(session.alignment);
    const int n_src_tokens = static_cast<int>(session.alignment.src_ids.size());
    const int n_tgt_tokens = static_cast<int>(session.alignment.tgt_ids.size());

    EditResult result;
    Tensor z_rec = session.trajectory.latents[static_cast<std::size_t>(steps)];
    Tensor z_edit = z_rec;

    const bool losses_active = cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0;

    for (int i = steps; i >= 1; --i) {
        const int t = session.trajectory.timesteps[static_cast<std::size_t>(i)];
        const int t_prev = session.trajectory.timesteps[static_cast<std::size_t>(i - 1)];
        const double ab_t = sched.alpha_bar(t);
        const double ab_prev = sched.alpha_bar(t_prev);
        const int step_index = steps - i;
        const Tensor& null_emb =
            session.trajectory.has_null_embeddings()
                ? session.trajectory.null_embeddings[static_cast<std::size_t>(step_index)]
                : base_null;

        // Reconstruction branch.
        StackCollector rec_collector;
        const Tensor eps_rec_cond = backend_.predict_noise(z_rec, t, ctx_src, &rec_collector);
        const Tensor eps_rec_uncond = backend_.predict_noise(z_rec, t, null_emb);
        const Tensor eps_rec = cfg_combine(eps_rec_cond, eps_rec_uncond, cfg.guidance_scale);
        result.recorder.record(Branch::reconstruction, step_index,
                               rec_collector.to_stack(n_src_tokens));
        const AttentionStack& rec_stack = result.recorder.stack(Branch::reconstruction, step_index);

        InjectionPlan plan{sources, &rec_stack};
        const InjectionPlan* plan_ptr = opts.enable_injection ? &plan : nullptr;

        // Per-step latent optimization, confined to the edit window.
        if (opts.enable_optimization && losses_active && !session.edits.empty() &&
            step_index < cfg.opt_window && cfg.inner_iters > 0) {
            // Common-token reference maps are branch constants per step.
            std::vector<Tensor> common_maps;
            common_maps.reserve(common_pairs.size());
            for (const auto& [src_col, tgt_col] : common_pairs)
                common_maps.push_back(
                    implicit_segmentation(rec_stack, src_col, lat_h, lat_w).map);
            Tensor common_sum({lat_h, lat_w});
            for (const auto& m : common_maps)
                kernels::add(common_sum.data(), m.data(), common_sum.data(), common_sum.numel());

            for (int iter = 0; iter < cfg.inner_iters; ++iter) {
                Var z_var = ad::leaf(z_edit);
                StackCollector collector;
                (void)backend_.predict_noise_var(z_var, t, ad::constant(ctx_tgt), &collector,
                                                 plan_ptr);

                std::vector<Var> oal_terms, ccl_terms;
                for (const auto& edit : session.edits) {
                    std::vector<Var> per_token;
                    per_token.reserve(edit.target_token_indices.size());
                    for (int idx : edit.target_token_indices)
                        per_token.push_back(
                            segmentation_var(collector.captures(), idx, lat_h, lat_w));
                    // Multi-token edit units: averaged for alignment,
                    // summed for the attention-ratio loss.
                    Var unit = per_token.size() == 1 ? per_token[0] : ops::stack_mean(per_token);
                    Var oal_term =
                        ops::add(ops::bce_vs_mask(unit, edit.mask, 1e-6),
                                 ops::bce_vs_mask(ops::div_by_max(unit, 1e-8), edit.mask, 1e-6));
                    oal_terms.push_back(oal_term);
                    Var edit_attn =
                        per_token.size() == 1 ? per_token[0] : ops::stack_sum(per_token);
                    ccl_terms.push_back(ops::ccl_deficit(
                        edit_attn, common_sum, edit.mask, 1e-8,
                        cfg.ccl_reduction == CclReduction::masked_mean));
                }
                Var oal_var = oal_terms.size() == 1 ? oal_terms[0] : ops::stack_sum(oal_terms);
                Var ccl_var = ccl_terms.size() == 1 ? ccl_terms[0] : ops::stack_sum(ccl_terms);
                Var total = ops::scale_add(oal_var, cfg.lambda1, ccl_var, cfg.lambda2);
                ad::backward(total);

                if (z_var->grad.numel() == 0)
                    z_var->ensure_grad();
                if (!z_var->grad.all_finite())
                    throw NonFiniteGradientError(
                        "non-finite latent gradient at step " + std::to_string(step_index) +
                        " iter " + std::to_string(iter));

                const Tensor before = z_edit;
                z_edit = masked_merge(z_edit, z_var->grad, session.union_mask, cfg.delta);
                result.background_latents_intact =
                    result.background_latents_intact &&
                    background_equal(before, z_edit, session.union_mask);

                result.losses.push_back({step_index, iter, oal_var->value[0], ccl_var->value[0],
                                         total->value[0]});
            }
            result.optimized_steps.push_back(step_index);
        }

        // Editing branch step (injection applies to the conditional pass).
        StackCollector edit_collector;
        const Tensor eps_edit_cond =
            backend_.predict_noise(z_edit, t, ctx_tgt, &edit_collector, plan_ptr);
        const Tensor eps_edit_uncond = backend_.predict_noise(z_edit, t, null_emb);
        const Tensor eps_edit = cfg_combine(eps_edit_cond, eps_edit_uncond, cfg.guidance_scale);
        result.recorder.record(Branch::editing, step_index,
                               edit_collector.to_stack(n_tgt_tokens));

        if (!opts.debug_dir.empty())
            dump_attention_heatmaps(opts.debug_dir, step_index,
                                    result.recorder.stack(Branch::editing, step_index),
                                    session.alignment, backend_.vocab(), lat_h, lat_w);

        z_rec = ddim_step(z_rec, eps_rec, ab_t, ab_prev);
        z_edit = ddim_step(z_edit, eps_edit, ab_t, ab_prev);
    }

    // Edit tokens that never attend inside their mask above the uniform
    // level are reported, not fatal.
    if (!session.edits.empty()) {
        const AttentionStack& last_stack = result.recorder.stack(Branch::editing, steps - 1);
        const double noise_floor = 1.0 / static_cast<double>(n_tgt_tokens);
        for (const auto& edit : session.edits) {
            for (int idx : edit.target_token_indices) {
                const ImplicitSegmentation seg =
                    implicit_segmentation(last_stack, idx, lat_h, lat_w);
                double max_inside = 0.0;
                for (std::size_t p = 0; p < seg.map.numel(); ++p)
                    if (edit.mask[p] != 0.0)
                        max_inside = std::max(max_inside, seg.map[p]);
                if (max_inside < noise_floor) {
                    const int id = session.alignment.tgt_ids[static_cast<std::size_t>(idx)];
                    result.warnings.push_back(
                        "edit token '" + backend_.vocab().word_of(id) +
                        "' never attends inside its mask above the noise floor (max " +
                        std::to_string(max_inside) + " < " + std::to_string(noise_floor) + ")");
                }
            }
        }
    }

    result.edited_image = backend_.decode_latent(z_edit);
    result.reconstructed_image = backend_.decode_latent(z_rec);
    return result;
}

EditResult EditPipeline::edit(const Tensor& image01, const std::string& src_prompt,
                              const std::string& tgt_prompt, std::vector<EditSpec> edits,
                              const NtiConfig& nti, const EditOptions& opts) const {
    const auto src_ids = backend_.vocab().tokenize(src_prompt);
    const auto tgt_ids = backend_.vocab().tokenize(tgt_prompt);
    InversionTrajectory traj = invert(image01, src_ids, nti);
    TokenAlignment alignment = align_tokens(src_ids, tgt_ids);
    const auto shape = backend_.latent_shape();
    EditSession session = make_session(std::move(traj), std::move(alignment), std::move(edits),
                                       config_, shape[1], shape[2]);
    return run(session, opts);
}

std::vector<int> resolve_edit_token_indices(const TokenAlignment& alignment,
                                            const std::vector<std::string>& words,
                                            const Vocabulary& vocab,
                                            std::vector<bool>* claimed) {
    std::vector<bool> local(alignment.tgt_ids.size(), false);
    std::vector<bool>& used = claimed ? *claimed : local;
    if (used.size() != alignment.tgt_ids.size())
        used.assign(alignment.tgt_ids.size(), false);

    std::vector<int> indices;
    for (const auto& word : words) {
        const int id = vocab.id_of(word);
        int found = -1;
        for (int idx : alignment.new_tokens) {
            if (alignment.tgt_ids[static_cast<std::size_t>(idx)] == id &&
                !used[static_cast<std::size_t>(idx)]) {
                found = idx;
                break;
            }
        }
        if (found < 0)
            throw AlignmentOutOfRangeError("word '" + word +
                                           "' is not an unclaimed new token of the target prompt");
        used[static_cast<std::size_t>(found)] = true;
        indices.push_back(found);
    }
    return indices;
}

}  // namespace mde
