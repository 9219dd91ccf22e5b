#include "mde/sampling/ddim.hpp"

#include <cmath>

#include "mde/ad/ops.hpp"
#include "mde/core/vocab.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde {

namespace ops = mde::ad::ops;

Tensor ddim_step(const Tensor& z, const Tensor& eps, double ab_from, double ab_to) {
    const double sf = std::sqrt(ab_from);
    const double sb = std::sqrt(1.0 - ab_from);
    const double st = std::sqrt(ab_to);
    const double su = std::sqrt(1.0 - ab_to);
    // out = (st/sf) z + (su - st*sb/sf) eps
    Tensor out(z.shape());
    kernels::scale(z.data(), st / sf, out.data(), out.numel());
    kernels::axpy(su - st * sb / sf, eps.data(), out.data(), out.numel());
    return out;
}

ad::Var ddim_step_var(const ad::Var& z, const ad::Var& eps, double ab_from, double ab_to) {
    const double sf = std::sqrt(ab_from);
    const double sb = std::sqrt(1.0 - ab_from);
    const double st = std::sqrt(ab_to);
    const double su = std::sqrt(1.0 - ab_to);
    return ops::scale_add(z, st / sf, eps, su - st * sb / sf);
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
    if (scale == 1.0)
        return eps_cond;
    Tensor out(eps_cond.shape());
    kernels::scale(eps_uncond.data(), 1.0 - scale, out.data(), out.numel());
    kernels::axpy(scale, eps_cond.data(), out.data(), out.numel());
    return out;
}

Tensor ddim_sample(const DenoiserBackend& backend, const Tensor& z_T,
                   const std::vector<int>& token_ids, int steps, double guidance_scale,
                   AttentionRecorder* recorder, Branch branch) {
    const NoiseSchedule& sched = backend.schedule();
    const std::vector<int> ts = sched.sampling_timesteps(steps);
    const Tensor ctx = backend.text_encode(token_ids);
    Tensor null_ctx;
    if (guidance_scale != 1.0)
        null_ctx = backend.text_encode({kBosId, kEosId});

    Tensor z = z_T;
    for (int i = steps; i >= 1; --i) {
        const int t = ts[static_cast<std::size_t>(i - 1)];
        const int t_prev = i >= 2 ? ts[static_cast<std::size_t>(i - 2)] : 0;
        const int step_index = steps - i;

        StackCollector collector;
        const Tensor eps_cond =
            backend.predict_noise(z, t, ctx, recorder ? &collector : nullptr);
        Tensor eps = eps_cond;
        if (guidance_scale != 1.0) {
            const Tensor eps_uncond = backend.predict_noise(z, t, null_ctx);
            eps = cfg_combine(eps_cond, eps_uncond, guidance_scale);
        }
        if (recorder)
            recorder->record(branch, step_index,
                             collector.to_stack(static_cast<int>(token_ids.size())));
        z = ddim_step(z, eps, sched.alpha_bar(t), sched.alpha_bar(t_prev));
    }
    return z;
}

}  // namespace mde
