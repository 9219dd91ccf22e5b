#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mde/backend/scene_gen.hpp"
#include "mde/nn/layers.hpp"

namespace mde {

struct ClassifierTrainConfig {
    int steps = 900;
    std::uint64_t seed = 23;
    double lr = 2e-3;
    int batch_size = 16;
};

// Small conv net over (image, region-mask) pairs predicting the shape kind
// and color inside the region. Its pooled trunk activations double as the
// perceptual feature embedding.
class ToyClassifier {
public:
    explicit ToyClassifier(std::uint64_t init_seed);

    struct Prediction {
        ShapeKind kind = ShapeKind::circle;
        ShapeColor color = ShapeColor::red;
        std::array<double, 3> kind_probs{};
        std::array<double, 4> color_probs{};
    };

    Prediction classify(const Tensor& image01, const Tensor& mask) const;
    // Pooled trunk activations with an all-ones region mask.
    Tensor features(const Tensor& image01) const;

    // Accuracy over (scene, shape) pairs with exact masks.
    double accuracy(const std::vector<SyntheticScene>& scenes) const;

    void save(const std::string& path) const;
    static ToyClassifier load(const std::string& path);

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

private:
    nn::ParamStore params_;
    nn::Conv2d c1_, c2_, c3_;
    nn::Linear head_kind_, head_color_;

    ad::Var trunk(const ad::Var& input4, nn::Binding& bind) const;  // pooled [1,F]
    friend ToyClassifier train_classifier(const std::vector<SyntheticScene>&,
                                          const ClassifierTrainConfig&);
};

// Supervised training on the synthetic scenes with noise, blur-free mask
// jitter and full-frame masks for single-shape scenes, so the classifier
// stays reliable on sampled (imperfect) images and coarse regions.
ToyClassifier train_classifier(const std::vector<SyntheticScene>& scenes,
                               const ClassifierTrainConfig& cfg);

}  // namespace mde
