#pragma once

#include <vector>

#include "mde/ad/graph.hpp"
#include "mde/attention/recorder.hpp"
#include "mde/backend/backend.hpp"

namespace mde {

// One deterministic (eta = 0) update from signal level ab_from to ab_to:
// pred_z0 = (z - sqrt(1-ab_from) eps) / sqrt(ab_from)
// out     = sqrt(ab_to) pred_z0 + sqrt(1-ab_to) eps
Tensor ddim_step(const Tensor& z, const Tensor& eps, double ab_from, double ab_to);
ad::Var ddim_step_var(const ad::Var& z, const ad::Var& eps, double ab_from, double ab_to);

// eps_uncond + scale * (eps_cond - eps_uncond); scale 1 short-circuits to
// the conditional prediction.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

// Full sampling loop from z_T under the prompt. The recorder (optional)
// receives one stack per step from the conditional forward, tagged with the
// given branch.
Tensor ddim_sample(const DenoiserBackend& backend, const Tensor& z_T,
                   const std::vector<int>& token_ids, int steps, double guidance_scale,
                   AttentionRecorder* recorder = nullptr,
                   Branch branch = Branch::reconstruction);

}  // namespace mde
