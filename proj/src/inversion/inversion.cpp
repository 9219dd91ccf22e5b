#include "mde/inversion/inversion.hpp"

#include <cmath>

#include "mde/ad/ops.hpp"
#include "mde/core/vocab.hpp"
#include "mde/io/container.hpp"
#include "mde/kernels/kernels.hpp"
#include "mde/nn/layers.hpp"
#include "mde/sampling/ddim.hpp"

namespace mde {

namespace ops = mde::ad::ops;

void InversionTrajectory::validate() const {
    if (latents.empty() || latents.size() != timesteps.size())
        throw Error("trajectory latent/timestep lengths differ");
    if (timesteps.front() != 0)
        throw Error("trajectory must start at timestep 0");
    for (const auto& z : latents)
        if (!z.all_finite())
            throw Error("trajectory contains non-finite latents");
    if (!null_embeddings.empty() &&
        null_embeddings.size() != static_cast<std::size_t>(steps()))
        throw Error("trajectory has a partial null-embedding set");
}

InversionTrajectory ddim_invert(const DenoiserBackend& backend, const Tensor& image01,
                                const std::vector<int>& prompt_ids, int steps) {
    InversionTrajectory traj;
    traj.prompt_ids = prompt_ids;
    traj.latents.push_back(backend.encode_image(image01));
    traj.timesteps.push_back(0);
    if (steps == 0)
        return traj;

    const NoiseSchedule& sched = backend.schedule();
    const std::vector<int> ts = sched.sampling_timesteps(steps);
    const Tensor ctx = backend.text_encode(prompt_ids);

    Tensor z = traj.latents.front();
    int t_cur = 0;
    for (int i = 1; i <= steps; ++i) {
        const int t_next = ts[static_cast<std::size_t>(i - 1)];
        // The estimate at the target timestep is applied to the current
        // latent; with small strides this closely reverses the update.
        const Tensor eps = backend.predict_noise(z, t_next, ctx);
        z = ddim_step(z, eps, sched.alpha_bar(t_cur), sched.alpha_bar(t_next));
        traj.latents.push_back(z);
        traj.timesteps.push_back(t_next);
        t_cur = t_next;
    }
    traj.validate();
    return traj;
}

NtiReport nti_optimize(const DenoiserBackend& backend, InversionTrajectory& trajectory,
                       const NtiConfig& cfg) {
    trajectory.validate();
    const int steps = trajectory.steps();
    NtiReport report;
    report.distances.resize(static_cast<std::size_t>(steps));
    trajectory.null_embeddings.assign(static_cast<std::size_t>(steps), Tensor());
    if (steps == 0)
        return report;
    if (!backend.supports_gradients())
        throw Error("null-embedding optimization needs a gradient-capable backend");

    const NoiseSchedule& sched = backend.schedule();
    const Tensor cond_ctx = backend.text_encode(trajectory.prompt_ids);
    Tensor phi = backend.text_encode({kBosId, kEosId});  // warm-start carrier

    Tensor z = trajectory.latents[static_cast<std::size_t>(steps)];
    for (int i = steps; i >= 1; --i) {
        const int t = trajectory.timesteps[static_cast<std::size_t>(i)];
        const int t_prev = trajectory.timesteps[static_cast<std::size_t>(i - 1)];
        const Tensor& target = trajectory.latents[static_cast<std::size_t>(i - 1)];
        const std::size_t step_index = static_cast<std::size_t>(steps - i);
        auto& dists = report.distances[step_index];

        // Conditional prediction is independent of the null embedding.
        const Tensor eps_cond = backend.predict_noise(z, t, cond_ctx);

        auto step_output = [&](const Tensor& null_emb) {
            const Tensor eps_uncond = backend.predict_noise(z, t, null_emb);
            const Tensor eps = cfg_combine(eps_cond, eps_uncond, cfg.guidance_scale);
            return ddim_step(z, eps, sched.alpha_bar(t), sched.alpha_bar(t_prev));
        };
        auto mse_to_target = [&](const Tensor& out) {
            Tensor diff(out.shape());
            kernels::sub(out.data(), target.data(), diff.data(), diff.numel());
            return kernels::sumsq(diff.data(), diff.numel()) /
                   static_cast<double>(diff.numel());
        };

        Tensor best_phi = phi;
        Tensor best_out = step_output(phi);
        double best_dist = mse_to_target(best_out);
        const double start_dist = best_dist;
        dists.push_back(best_dist);

        nn::Param phi_param{"nti.null", phi};
        nn::AdamOptimizer adam(cfg.lr);
        for (int iter = 0; iter < cfg.inner_steps; ++iter) {
            if (best_dist <= cfg.early_stop_tol)
                break;
            ad::Var phi_var = ad::leaf(phi_param.value);
            ad::Var eps_u = backend.predict_noise_var(ad::constant(z), t, phi_var);
            ad::Var eps = ops::scale_add(eps_u, 1.0 - cfg.guidance_scale,
                                         ad::constant(eps_cond), cfg.guidance_scale);
            ad::Var out = ddim_step_var(ad::constant(z), eps, sched.alpha_bar(t),
                                        sched.alpha_bar(t_prev));
            ad::Var dist = ops::mse_vs(out, target);
            ad::backward(dist);
            adam.step({&phi_param}, {&phi_var->grad});

            const Tensor out_now = step_output(phi_param.value);
            const double d = mse_to_target(out_now);
            dists.push_back(d);
            if (!std::isfinite(d) || d > 10.0 * std::max(start_dist, 1e-12))
                throw DivergedOptimizationError("null-embedding fit diverged at step " +
                                                std::to_string(step_index));
            if (d < best_dist) {
                best_dist = d;
                best_phi = phi_param.value;
                best_out = out_now;
            }
        }

        trajectory.null_embeddings[step_index] = best_phi;
        phi = best_phi;  // warm start for the next step
        z = best_out;
    }
    return report;
}

Tensor resample(const DenoiserBackend& backend, const InversionTrajectory& trajectory,
                double guidance_scale) {
    trajectory.validate();
    const NoiseSchedule& sched = backend.schedule();
    const int steps = trajectory.steps();
    const Tensor cond_ctx = backend.text_encode(trajectory.prompt_ids);
    const Tensor base_null = backend.text_encode({kBosId, kEosId});

    Tensor z = trajectory.latents[static_cast<std::size_t>(steps)];
    for (int i = steps; i >= 1; --i) {
        const int t = trajectory.timesteps[static_cast<std::size_t>(i)];
        const int t_prev = trajectory.timesteps[static_cast<std::size_t>(i - 1)];
        const Tensor eps_cond = backend.predict_noise(z, t, cond_ctx);
        Tensor eps = eps_cond;
        if (guidance_scale != 1.0) {
            const Tensor& null_emb = trajectory.has_null_embeddings()
                                         ? trajectory.null_embeddings[static_cast<std::size_t>(steps - i)]
                                         : base_null;
            const Tensor eps_uncond = backend.predict_noise(z, t, null_emb);
            eps = cfg_combine(eps_cond, eps_uncond, guidance_scale);
        }
        z = ddim_step(z, eps, sched.alpha_bar(t), sched.alpha_bar(t_prev));
    }
    return z;
}

double reconstruction_mse(const DenoiserBackend& backend, const InversionTrajectory& trajectory,
                          const Tensor& z0_reference, double guidance_scale) {
    const Tensor z0 = resample(backend, trajectory, guidance_scale);
    Tensor diff(z0.shape());
    kernels::sub(z0.data(), z0_reference.data(), diff.data(), diff.numel());
    return kernels::sumsq(diff.data(), diff.numel()) / static_cast<double>(diff.numel());
}

void save_trajectory(const std::string& path, const InversionTrajectory& trajectory,
                     const std::string& prompt) {
    trajectory.validate();
    Container c;
    c.meta["kind"] = "trajectory";
    c.meta["prompt"] = prompt;
    c.meta["prompt_ids"] = trajectory.prompt_ids;
    c.meta["steps"] = trajectory.steps();
    c.meta["timesteps"] = trajectory.timesteps;
    c.meta["backend_hash"] = trajectory.backend_hash;
    for (std::size_t i = 0; i < trajectory.latents.size(); ++i)
        c.tensors.emplace_back("latent_" + std::to_string(i), trajectory.latents[i]);
    for (std::size_t i = 0; i < trajectory.null_embeddings.size(); ++i)
        c.tensors.emplace_back("null_" + std::to_string(i), trajectory.null_embeddings[i]);
    c.save(path);
}

InversionTrajectory load_trajectory(const std::string& path) {
    Container c = Container::load(path);
    if (c.meta.value("kind", "") != "trajectory")
        throw IoError("not a trajectory file: " + path);
    InversionTrajectory traj;
    traj.prompt_ids = c.meta.at("prompt_ids").get<std::vector<int>>();
    traj.timesteps = c.meta.at("timesteps").get<std::vector<int>>();
    traj.backend_hash = c.meta.at("backend_hash").get<std::uint64_t>();
    const int steps = c.meta.at("steps").get<int>();
    for (int i = 0; i <= steps; ++i) {
        const Tensor* t = c.find("latent_" + std::to_string(i));
        if (!t)
            throw IoError("trajectory missing latent " + std::to_string(i));
        traj.latents.push_back(*t);
    }
    for (int i = 0; i < steps; ++i) {
        const Tensor* t = c.find("null_" + std::to_string(i));
        if (!t)
            break;
        traj.null_embeddings.push_back(*t);
    }
    if (!traj.null_embeddings.empty() &&
        traj.null_embeddings.size() != static_cast<std::size_t>(steps))
        throw IoError("trajectory has a partial null-embedding set");
    traj.validate();
    return traj;
}

}  // namespace mde
