#pragma once

#include <string>
#include <vector>

#include "mde/attention/recorder.hpp"
#include "mde/backend/toy_denoiser.hpp"
#include "mde/inversion/inversion.hpp"
#include "mde/losses/mde_losses.hpp"

namespace mde {

// One prepared edit: the inverted source, the prompt correspondence, the
// per-object targets, and the guidance settings.
struct EditSession {
    InversionTrajectory trajectory;
    TokenAlignment alignment;
    std::vector<EditSpec> edits;
    Tensor union_mask;  // [H,W]; empty edit list -> all zeros
    GuidanceConfig config;
};

EditSession make_session(InversionTrajectory trajectory, TokenAlignment alignment,
                         std::vector<EditSpec> edits, GuidanceConfig config, int mask_h,
                         int mask_w);

struct EditOptions {
    bool enable_injection = true;
    bool enable_optimization = true;
    std::string debug_dir;  // per-step attention heatmaps when non-empty
};

struct StepLossEntry {
    int step = 0;
    int iter = 0;
    double oal = 0.0;
    double ccl = 0.0;
    double total = 0.0;
};

struct EditResult {
    Tensor edited_image;         // [3,H,W] in [0,1]
    Tensor reconstructed_image;  // reconstruction branch output
    std::vector<StepLossEntry> losses;
    std::vector<int> optimized_steps;      // step indices that ran optimization
    bool background_latents_intact = true;  // verified around every update
    std::vector<std::string> warnings;
    AttentionRecorder recorder;
};

// Dual-branch denoiser from a shared trajectory endpoint: the
// reconstruction branch retraces the source under its per-step null
// embeddings while the editing branch runs under the target prompt with
// reconstruction attention injected for shared tokens and, inside the
// optimization window, per-step latent updates confined to the edit masks.
class EditPipeline {
public:
    EditPipeline(const ToyDenoiser& backend, GuidanceConfig config);

    // Inversion followed by per-step null-embedding fitting.
    InversionTrajectory invert(const Tensor& image01, const std::vector<int>& prompt_ids,
                               const NtiConfig& nti) const;

    EditResult run(const EditSession& session, const EditOptions& opts = {}) const;

    // Convenience: tokenize, invert, align, run.
    EditResult edit(const Tensor& image01, const std::string& src_prompt,
                    const std::string& tgt_prompt, std::vector<EditSpec> edits,
                    const NtiConfig& nti, const EditOptions& opts = {}) const;

    const GuidanceConfig& config() const { return config_; }
    const ToyDenoiser& backend() const { return backend_; }

private:
    const ToyDenoiser& backend_;
    GuidanceConfig config_;
};

// Maps edit words (e.g. "green", "triangle") to new-token indices of the
// target prompt, claiming each occurrence at most once across calls.
std::vector<int> resolve_edit_token_indices(const TokenAlignment& alignment,
                                            const std::vector<std::string>& words,
                                            const Vocabulary& vocab, std::vector<bool>* claimed);

}  // namespace mde
