#pragma once

#include <cstdint>
#include <string>

#include "mde/backend/backend.hpp"
#include "mde/core/vocab.hpp"
#include "mde/nn/layers.hpp"

namespace mde {

struct DenoiserArch {
    int in_channels = 3;
    int image_size = 32;
    int base_channels = 16;  // 32x32 stage
    int mid_channels = 32;   // 16x16 and 8x8 stages
    int text_dim = 64;
    int time_dim = 64;
    int heads = 2;
    int norm_groups = 8;
    int train_timesteps = 1000;
    int max_tokens = 16;
};

// Small text-conditioned UNet: conv stages at 32/16/8 with cross-attention
// at 16x16 (down), 8x8 (mid) and 16x16 (up), a one-block transformer text
// encoder, and sinusoidal+MLP time conditioning. The image codec is the
// identity up to the [0,1] <-> [-1,1] range map.
class ToyDenoiser : public DenoiserBackend {
public:
    ToyDenoiser(DenoiserArch arch, Vocabulary vocab, std::uint64_t init_seed);

    // DenoiserBackend surface.
    std::vector<int> latent_shape() const override;
    const NoiseSchedule& schedule() const override { return schedule_; }
    Tensor text_encode(const std::vector<int>& token_ids) const override;
    Tensor predict_noise(const Tensor& z, int t, const Tensor& text_ctx,
                         AttnSink* sink = nullptr,
                         const InjectionPlan* inject = nullptr) const override;
    Tensor encode_image(const Tensor& image01) const override;
    Tensor decode_latent(const Tensor& latent) const override;
    std::vector<CrossAttnLayerInfo> cross_attention_layers() const override;
    bool supports_gradients() const override { return true; }
    ad::Var predict_noise_var(const ad::Var& z, int t, const ad::Var& text_ctx,
                              AttnSink* sink = nullptr,
                              const InjectionPlan* inject = nullptr) const override;

    // Graph-mode paths used by training (trainable binding shared across a
    // batch) and by inference-time optimization.
    ad::Var forward(const ad::Var& z, int t, const ad::Var& text_ctx, nn::Binding& bind,
                    AttnSink* sink = nullptr, const InjectionPlan* inject = nullptr) const;
    ad::Var encode_text_var(const std::vector<int>& token_ids, nn::Binding& bind) const;

    const DenoiserArch& arch() const { return arch_; }
    const Vocabulary& vocab() const { return vocab_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    std::uint64_t param_hash() const { return params_.value_hash(); }

private:
    DenoiserArch arch_;
    Vocabulary vocab_;
    NoiseSchedule schedule_;
    nn::ParamStore params_;

    // Text encoder.
    nn::Param* tok_emb_ = nullptr;
    nn::Param* pos_emb_ = nullptr;
    nn::SelfAttentionBlock text_block_;
    nn::LayerNorm text_out_norm_;

    // Time conditioning.
    nn::Linear time_fc1_, time_fc2_;

    // UNet.
    nn::Conv2d conv_in_;
    nn::ResBlock rb_down1_;
    nn::Conv2d down1_;
    nn::ResBlock rb_down2_;
    nn::CrossAttention ca_down_;
    nn::Conv2d down2_;
    nn::ResBlock rb_mid1_;
    nn::CrossAttention ca_mid_;
    nn::ResBlock rb_mid2_;
    nn::Conv2d up1_;
    nn::ResBlock rb_up1_;
    nn::CrossAttention ca_up_;
    nn::Conv2d up2_;
    nn::ResBlock rb_up2_;
    nn::GroupNorm out_norm_;
    nn::Conv2d conv_out_;
};

}  // namespace mde
