#include "mde/metrics/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "mde/ad/ops.hpp"
#include "mde/core/errors.hpp"
#include "mde/io/container.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde {

namespace ops = mde::ad::ops;
using ad::Var;

namespace {

constexpr int kTrunkChannels = 32;

Tensor stack_input(const Tensor& image01, const Tensor& mask) {
    const int h = image01.size(1), w = image01.size(2);
    if (mask.size(0) != h || mask.size(1) != w)
        throw ShapeMismatchError("classifier input mask " + mask.shape_str());
    Tensor input({4, h, w});
    std::copy(image01.data(), image01.data() + image01.numel(), input.data());
    std::copy(mask.data(), mask.data() + mask.numel(), input.data() + image01.numel());
    return input;
}

// Pool a [C,H,W] feature map to [1,C] row.
Var global_mean_pool(const Var& x) {
    const int c = x->value.size(0);
    const int hw = x->value.size(1) * x->value.size(2);
    Var rows = ops::reshape(x, {c, hw});       // [C, HW]
    Var pooled = ops::mean_all(ops::slice_cols(rows, 0, 0));  // placeholder, replaced below
    (void)pooled;
    // mean over HW per channel: matmul with a constant 1/hw vector.
    Tensor ones({hw, 1}, 1.0 / hw);
    return ops::reshape(ops::matmul(rows, ad::constant(ones)), {1, c});
}

int argmax_row(const Tensor& row) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(row.numel()); ++i)
        if (row[static_cast<std::size_t>(i)] > row[static_cast<std::size_t>(best)])
            best = i;
    return best;
}

void softmax_row_inplace(Tensor& row) {
    double mx = row[0];
    for (std::size_t i = 1; i < row.numel(); ++i)
        mx = std::max(mx, row[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < row.numel(); ++i) {
        row[i] = std::exp(row[i] - mx);
        denom += row[i];
    }
    for (std::size_t i = 0; i < row.numel(); ++i)
        row[i] /= denom;
}

}  // namespace

ToyClassifier::ToyClassifier(std::uint64_t init_seed) {
    Rng rng(derive_seed(init_seed, "classifier-init"));
    c1_ = nn::Conv2d::create(params_, "clf.c1", 4, 16, 3, 2, 1, rng);
    c2_ = nn::Conv2d::create(params_, "clf.c2", 16, 32, 3, 2, 1, rng);
    c3_ = nn::Conv2d::create(params_, "clf.c3", 32, kTrunkChannels, 3, 2, 1, rng);
    head_kind_ = nn::Linear::create(params_, "clf.head_kind", kTrunkChannels, 3, rng);
    head_color_ = nn::Linear::create(params_, "clf.head_color", kTrunkChannels, 4, rng);
}

ad::Var ToyClassifier::trunk(const ad::Var& input4, nn::Binding& bind) const {
    Var x = ops::silu(c1_(bind, input4));
    x = ops::silu(c2_(bind, x));
    x = ops::silu(c3_(bind, x));
    return global_mean_pool(x);  // [1, kTrunkChannels]
}

ToyClassifier::Prediction ToyClassifier::classify(const Tensor& image01,
                                                  const Tensor& mask) const {
    ad::NoGradGuard ng;
    nn::Binding bind(false);
    Var feats = trunk(ad::constant(stack_input(image01, mask)), bind);
    Tensor kind_logits = head_kind_(bind, feats)->value.reshaped({3});
    Tensor color_logits = head_color_(bind, feats)->value.reshaped({4});
    softmax_row_inplace(kind_logits);
    softmax_row_inplace(color_logits);

    Prediction p;
    p.kind = static_cast<ShapeKind>(argmax_row(kind_logits));
    p.color = static_cast<ShapeColor>(argmax_row(color_logits));
    for (int i = 0; i < 3; ++i)
        p.kind_probs[static_cast<std::size_t>(i)] = kind_logits[static_cast<std::size_t>(i)];
    for (int i = 0; i < 4; ++i)
        p.color_probs[static_cast<std::size_t>(i)] = color_logits[static_cast<std::size_t>(i)];
    return p;
}

Tensor ToyClassifier::features(const Tensor& image01) const {
    ad::NoGradGuard ng;
    nn::Binding bind(false);
    Tensor ones({image01.size(1), image01.size(2)}, 1.0);
    return trunk(ad::constant(stack_input(image01, ones)), bind)->value.reshaped({kTrunkChannels});
}

double ToyClassifier::accuracy(const std::vector<SyntheticScene>& scenes) const {
    int total = 0, correct = 0;
    for (const auto& scene : scenes) {
        for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
            const auto pred = classify(scene.image, scene.masks[i]);
            ++total;
            if (pred.kind == scene.shapes[i].kind && pred.color == scene.shapes[i].color)
                ++correct;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

void ToyClassifier::save(const std::string& path) const {
    Container c;
    c.meta["kind"] = "toy_classifier";
    for (const auto* p : params_.all())
        c.tensors.emplace_back(p->name, p->value);
    c.save(path);
}

ToyClassifier ToyClassifier::load(const std::string& path) {
    Container c = Container::load(path);
    if (c.meta.value("kind", "") != "toy_classifier")
        throw IoError("not a classifier checkpoint: " + path);
    ToyClassifier clf(0);
    for (auto* p : clf.params_.all()) {
        const Tensor* t = c.find(p->name);
        if (!t || t->shape() != p->value.shape())
            throw IoError("classifier checkpoint mismatch for '" + p->name + "'");
        p->value = *t;
    }
    return clf;
}

namespace {

struct TrainSample {
    Tensor input;  // [4,H,W]
    int kind;
    int color;
};

Tensor jitter_mask(const Tensor& mask, Rng& rng) {
    const int h = mask.size(0), w = mask.size(1);
    const int mode = rng.uniform_int(0, 2);
    if (mode == 0)
        return mask;
    if (mode == 1) {
        // 1px dilation.
        Tensor out = mask;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (mask.at(y, x) == 0.0)
                    continue;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = std::clamp(y + dy, 0, h - 1);
                        const int xx = std::clamp(x + dx, 0, w - 1);
                        out.at(yy, xx) = 1.0;
                    }
            }
        return out;
    }
    // Bounding box.
    int y0 = h, y1 = -1, x0 = w, x1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x) != 0.0) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    Tensor out({h, w});
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            out.at(y, x) = 1.0;
    return out;
}

TrainSample make_sample(const SyntheticScene& scene, std::size_t shape_idx, Rng& rng) {
    Tensor image = scene.image;
    const double noise_sigma = rng.uniform(0.0, 0.22);
    for (auto& v : image.vec())
        v = std::clamp(v + rng.normal() * noise_sigma, 0.0, 1.0);
    Tensor mask = scene.shapes.size() == 1 && rng.bernoulli(0.4)
                      ? Tensor({scene.image.size(1), scene.image.size(2)}, 1.0)
                      : jitter_mask(scene.masks[shape_idx], rng);
    TrainSample s{stack_input(image, mask), static_cast<int>(scene.shapes[shape_idx].kind),
                  static_cast<int>(scene.shapes[shape_idx].color)};
    return s;
}

}  // namespace

ToyClassifier train_classifier(const std::vector<SyntheticScene>& scenes,
                               const ClassifierTrainConfig& cfg) {
    if (scenes.empty())
        throw Error("classifier training needs a non-empty dataset");
    ToyClassifier clf(cfg.seed);
    nn::AdamOptimizer adam(cfg.lr);
    auto params = clf.params_.all();

    std::vector<std::pair<std::size_t, std::size_t>> units;  // (scene, shape)
    for (std::size_t i = 0; i < scenes.size(); ++i)
        for (std::size_t j = 0; j < scenes[i].shapes.size(); ++j)
            units.emplace_back(i, j);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(derive_seed(cfg.seed, "clf-step:" + std::to_string(step)));
        nn::Binding bind(true);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& [si, sj] =
                units[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(units.size()) - 1))];
            const TrainSample sample = make_sample(scenes[si], sj, rng);
            Var feats = clf.trunk(ad::constant(sample.input), bind);
            Var loss = ops::scale_add(
                ops::ce_vs_labels(clf.head_kind_(bind, feats), {sample.kind}), 1.0,
                ops::ce_vs_labels(clf.head_color_(bind, feats), {sample.color}), 1.0);
            ad::backward(loss);
            if (!std::isfinite(loss->value[0]))
                throw DivergedTrainingError("classifier loss became non-finite");
        }
        std::vector<Tensor> merged(params.size());
        std::vector<const Tensor*> grad_ptrs(params.size(), nullptr);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            const ad::Var* v = bind.var_of(*params[pi]);
            if (v && (*v)->grad.numel()) {
                merged[pi] = (*v)->grad;
                kernels::scale(merged[pi].data(), 1.0 / cfg.batch_size, merged[pi].data(),
                               merged[pi].numel());
                grad_ptrs[pi] = &merged[pi];
            }
        }
        adam.step(params, grad_ptrs);
    }
    return clf;
}

}  // namespace mde
