#pragma once

#include <vector>

#include "mde/core/tensor.hpp"

namespace mde {

// Cumulative signal schedule: alpha_bar(0) = 1, strictly decreasing in t.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    explicit NoiseSchedule(std::vector<double> alpha_bar);

    // alpha_bar(t) = 1 - t/(T+1); stays strictly positive at t = T.
    static NoiseSchedule linear_alpha_bar(int train_steps);

    int train_steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    double alpha_bar(int t) const;

    // z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) noise
    Tensor q_sample(const Tensor& z0, int t, const Tensor& noise) const;

    // Ascending inference timesteps {t_1..t_steps}, t_i = i*T/steps; a step
    // count of T yields every timestep.
    std::vector<int> sampling_timesteps(int steps) const;

    const std::vector<double>& alpha_bars() const { return alpha_bar_; }
    void validate() const;

private:
    std::vector<double> alpha_bar_;
};

}  // namespace mde
