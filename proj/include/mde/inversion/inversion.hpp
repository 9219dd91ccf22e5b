#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mde/backend/backend.hpp"

namespace mde {

// Latents along the image -> noise path: latents[0] is the encoded input,
// latents[steps()] the noise-level endpoint. timesteps[i] is the schedule
// position of latents[i]. When present, null_embeddings[k] conditions
// denoising step k (counted from the noise end).
struct InversionTrajectory {
    std::vector<Tensor> latents;
    std::vector<int> timesteps;
    std::vector<Tensor> null_embeddings;
    std::vector<int> prompt_ids;
    std::uint64_t backend_hash = 0;

    int steps() const { return static_cast<int>(latents.size()) - 1; }
    bool has_null_embeddings() const { return !null_embeddings.empty(); }
    void validate() const;
};

// Deterministic reverse walk: the noise estimate at the current latent is
// reused to move one schedule position up. Runs unguided (conditional
// prediction only). steps == 0 yields the single-latent trajectory.
InversionTrajectory ddim_invert(const DenoiserBackend& backend, const Tensor& image01,
                                const std::vector<int>& prompt_ids, int steps);

struct NtiConfig {
    int inner_steps = 10;
    double lr = 1e-2;
    double early_stop_tol = 1e-5;  // on per-step squared distance (MSE)
    double guidance_scale = 3.0;
};

struct NtiReport {
    // distances[k][i]: squared distance after iteration i of denoising step
    // k; distances[k][0] is the pre-optimization distance.
    std::vector<std::vector<double>> distances;
};

// Per-step null-embedding fit: each denoising step's unconditional context
// is tuned so the guided step lands on the inversion trajectory; the best
// iterate is kept. Throws DivergedOptimizationError when a step's distance
// grows 10x over its starting value.
NtiReport nti_optimize(const DenoiserBackend& backend, InversionTrajectory& trajectory,
                       const NtiConfig& cfg);

// Guided resampling from the trajectory endpoint using its per-step null
// embeddings (or the backend's default when absent). Returns z_0.
Tensor resample(const DenoiserBackend& backend, const InversionTrajectory& trajectory,
                double guidance_scale);

double reconstruction_mse(const DenoiserBackend& backend, const InversionTrajectory& trajectory,
                          const Tensor& z0_reference, double guidance_scale);

void save_trajectory(const std::string& path, const InversionTrajectory& trajectory,
                     const std::string& prompt);
InversionTrajectory load_trajectory(const std::string& path);

}  // namespace mde
