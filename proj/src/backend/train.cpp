#include "mde/backend/train.hpp"

#include <cmath>
#include <thread>

#include "mde/ad/ops.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde {

namespace ops = mde::ad::ops;

namespace {

struct ItemDraw {
    int t;
    Tensor noise;
    bool drop_caption;
};

ItemDraw draw_for(std::uint64_t seed, const std::string& tag, const NoiseSchedule& sched,
                  const std::vector<int>& latent_shape, double cfg_dropout) {
    Rng rng(derive_seed(seed, tag));
    ItemDraw d;
    d.t = rng.uniform_int(1, sched.train_steps());
    d.noise = Tensor(latent_shape);
    for (auto& v : d.noise.vec())
        v = rng.normal();
    d.drop_caption = rng.bernoulli(cfg_dropout);
    return d;
}

double item_loss_and_grads(const ToyDenoiser& model, const SyntheticScene& scene,
                           const ItemDraw& draw, nn::Binding& bind) {
    const Tensor z0 = model.encode_image(scene.image);
    const Tensor zt = model.schedule().q_sample(z0, draw.t, draw.noise);
    const std::vector<int> ids =
        draw.drop_caption ? model.vocab().tokenize("") : model.vocab().tokenize(scene.caption);
    ad::Var ctx = model.encode_text_var(ids, bind);
    ad::Var pred = model.forward(ad::constant(zt), draw.t, ctx, bind);
    ad::Var loss = ops::mse_vs(pred, draw.noise);
    ad::backward(loss);
    return loss->value[0];
}

}  // namespace

std::pair<std::vector<SyntheticScene>, std::vector<SyntheticScene>> split_holdout(
    const std::vector<SyntheticScene>& dataset, double fraction) {
    const std::size_t n_hold =
        static_cast<std::size_t>(std::floor(dataset.size() * fraction));
    std::vector<SyntheticScene> train(dataset.begin(), dataset.end() - n_hold);
    std::vector<SyntheticScene> hold(dataset.end() - n_hold, dataset.end());
    return {std::move(train), std::move(hold)};
}

double holdout_loss(const ToyDenoiser& model, const std::vector<SyntheticScene>& holdout,
                    std::uint64_t seed) {
    if (holdout.empty())
        return 0.0;
    ad::NoGradGuard ng;
    double acc = 0.0;
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        const auto draw = draw_for(seed, "holdout:" + std::to_string(i), model.schedule(),
                                   model.latent_shape(), 0.0);
        const Tensor z0 = model.encode_image(holdout[i].image);
        const Tensor zt = model.schedule().q_sample(z0, draw.t, draw.noise);
        const Tensor ctx = model.text_encode(model.vocab().tokenize(holdout[i].caption));
        const Tensor pred = model.predict_noise(zt, draw.t, ctx);
        Tensor diff(pred.shape());
        kernels::sub(pred.data(), draw.noise.data(), diff.data(), diff.numel());
        acc += kernels::sumsq(diff.data(), diff.numel()) / static_cast<double>(diff.numel());
    }
    return acc / static_cast<double>(holdout.size());
}

TrainReport train_toy(ToyDenoiser& model, const std::vector<SyntheticScene>& dataset,
                      const TrainConfig& cfg,
                      const std::function<void(int, double)>& progress) {
    if (dataset.empty())
        throw Error("training dataset is empty");
    auto [train_set, hold_set] = split_holdout(dataset, cfg.holdout_fraction);
    if (train_set.empty())
        throw Error("holdout fraction leaves no training scenes");

    nn::AdamOptimizer adam(cfg.lr);
    auto params = model.params().all();
    const int threads = std::max(1, cfg.threads);

    TrainReport report;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Seeded epoch shuffle.
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i)))]);

        for (std::size_t batch_start = 0; batch_start + cfg.batch_size <= order.size();
             batch_start += cfg.batch_size, ++step) {
            // Each worker owns a binding (one leaf per parameter) and walks
            // its stripe of the batch; merging worker gradients in worker
            // order keeps the update independent of scheduling.
            std::vector<nn::Binding> bindings;
            bindings.reserve(static_cast<std::size_t>(threads));
            for (int w = 0; w < threads; ++w)
                bindings.emplace_back(true);
            std::vector<double> worker_loss(static_cast<std::size_t>(threads), 0.0);
            std::vector<std::thread> pool;
            for (int w = 0; w < threads; ++w) {
                pool.emplace_back([&, w]() {
                    for (int j = w; j < cfg.batch_size; j += threads) {
                        const std::size_t idx = order[batch_start + static_cast<std::size_t>(j)];
                        const auto draw = draw_for(
                            cfg.seed, "item:" + std::to_string(step) + ":" + std::to_string(j),
                            model.schedule(), model.latent_shape(), cfg.cfg_dropout);
                        worker_loss[static_cast<std::size_t>(w)] += item_loss_and_grads(
                            model, train_set[idx], draw, bindings[static_cast<std::size_t>(w)]);
                    }
                });
            }
            for (auto& th : pool)
                th.join();

            double batch_loss = 0.0;
            for (double l : worker_loss)
                batch_loss += l;
            batch_loss /= cfg.batch_size;
            if (!std::isfinite(batch_loss))
                throw DivergedTrainingError("non-finite loss at step " + std::to_string(step));
            report.loss_curve.push_back(batch_loss);

            // Merge per-worker gradients (worker 0 first) and average.
            std::vector<Tensor> merged(params.size());
            std::vector<const Tensor*> grad_ptrs(params.size(), nullptr);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                Tensor acc;
                for (int w = 0; w < threads; ++w) {
                    const ad::Var* v = bindings[static_cast<std::size_t>(w)].var_of(*params[pi]);
                    if (!v || (*v)->grad.numel() == 0)
                        continue;
                    if (acc.numel() == 0)
                        acc = (*v)->grad;
                    else
                        kernels::add(acc.data(), (*v)->grad.data(), acc.data(), acc.numel());
                }
                if (acc.numel() != 0) {
                    kernels::scale(acc.data(), 1.0 / cfg.batch_size, acc.data(), acc.numel());
                    merged[pi] = std::move(acc);
                    grad_ptrs[pi] = &merged[pi];
                }
            }
            adam.step(params, grad_ptrs);

            if (progress && step % cfg.log_every == 0)
                progress(step, batch_loss);
        }
    }
    report.steps = step;
    report.final_holdout_loss =
        holdout_loss(model, hold_set.empty() ? train_set : hold_set, cfg.seed);
    return report;
}

}  // namespace mde
