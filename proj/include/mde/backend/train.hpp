#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mde/backend/scene_gen.hpp"
#include "mde/backend/toy_denoiser.hpp"

namespace mde {

struct TrainConfig {
    int epochs = 30;
    std::uint64_t seed = 17;
    double lr = 2e-3;
    int batch_size = 8;
    double cfg_dropout = 0.1;        // caption replaced by the empty prompt
    double holdout_fraction = 0.1;
    int threads = 2;
    int log_every = 50;
};

struct TrainReport {
    std::vector<double> loss_curve;  // per optimizer step (batch mean)
    double final_holdout_loss = 0.0;
    int steps = 0;
};

// Denoising objective: predict the q-sample noise under the caption (or the
// empty prompt with cfg_dropout probability); batch items run across
// threads with a deterministic gradient merge. Throws DivergedTrainingError
// on a non-finite loss.
TrainReport train_toy(ToyDenoiser& model, const std::vector<SyntheticScene>& dataset,
                      const TrainConfig& cfg,
                      const std::function<void(int, double)>& progress = nullptr);

// Noise-prediction loss on the held-out slice with frozen (t, noise) draws.
double holdout_loss(const ToyDenoiser& model, const std::vector<SyntheticScene>& holdout,
                    std::uint64_t seed);

// Deterministic dataset split: the last floor(fraction*n) scenes are held out.
std::pair<std::vector<SyntheticScene>, std::vector<SyntheticScene>> split_holdout(
    const std::vector<SyntheticScene>& dataset, double fraction);

}  // namespace mde
