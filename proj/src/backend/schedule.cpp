#include "mde/backend/schedule.hpp"

#include <cmath>

#include "mde/core/errors.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    validate();
}

NoiseSchedule NoiseSchedule::linear_alpha_bar(int train_steps) {
    std::vector<double> ab(static_cast<std::size_t>(train_steps) + 1);
    for (int t = 0; t <= train_steps; ++t)
        ab[static_cast<std::size_t>(t)] = 1.0 - static_cast<double>(t) / (train_steps + 1);
    return NoiseSchedule(std::move(ab));
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > train_steps())
        throw Error("timestep out of schedule range: " + std::to_string(t));
    return alpha_bar_[static_cast<std::size_t>(t)];
}

Tensor NoiseSchedule::q_sample(const Tensor& z0, int t, const Tensor& noise) const {
    if (!z0.same_shape(noise))
        throw ShapeMismatchError("q_sample: z0 " + z0.shape_str() + " vs noise " +
                                 noise.shape_str());
    const double ab = alpha_bar(t);
    Tensor out(z0.shape());
    kernels::scale(z0.data(), std::sqrt(ab), out.data(), out.numel());
    kernels::axpy(std::sqrt(1.0 - ab), noise.data(), out.data(), out.numel());
    return out;
}

std::vector<int> NoiseSchedule::sampling_timesteps(int steps) const {
    if (steps < 1 || steps > train_steps())
        throw Error("sampling steps must lie in [1, train_steps]");
    std::vector<int> ts(static_cast<std::size_t>(steps));
    for (int i = 1; i <= steps; ++i)
        ts[static_cast<std::size_t>(i - 1)] =
            static_cast<int>(static_cast<long>(i) * train_steps() / steps);
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (ts[i] <= ts[i - 1])
            throw Error("sampling timesteps not strictly increasing; reduce step count");
    return ts;
}

void NoiseSchedule::validate() const {
    if (alpha_bar_.size() < 2)
        throw Error("schedule needs at least timesteps {0,1}");
    if (alpha_bar_.front() != 1.0)
        throw Error("alpha_bar(0) must equal 1");
    for (std::size_t i = 1; i < alpha_bar_.size(); ++i) {
        if (!(alpha_bar_[i] < alpha_bar_[i - 1]))
            throw Error("alpha_bar must be strictly decreasing");
        if (alpha_bar_[i] <= 0.0)
            throw Error("alpha_bar must stay positive");
    }
}

}  // namespace mde
