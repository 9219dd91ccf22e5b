#include "mde/backend/toy_denoiser.hpp"

#include <algorithm>
#include <numeric>

namespace mde {

namespace ops = mde::ad::ops;
using ad::Var;

ToyDenoiser::ToyDenoiser(DenoiserArch arch, Vocabulary vocab, std::uint64_t init_seed)
    : arch_(arch),
      vocab_(std::move(vocab)),
      schedule_(NoiseSchedule::linear_alpha_bar(arch.train_timesteps)) {
    Rng rng(derive_seed(init_seed, "denoiser-init"));
    const int c1 = arch_.base_channels;
    const int c2 = arch_.mid_channels;
    const int td = arch_.text_dim;
    const int groups = arch_.norm_groups;

    tok_emb_ = &params_.add("text.tok_emb",
                            nn::normal_init(rng, {vocab_.size(), td}, 0.02));
    pos_emb_ = &params_.add("text.pos_emb",
                            nn::normal_init(rng, {arch_.max_tokens, td}, 0.02));
    text_block_ = nn::SelfAttentionBlock::create(params_, "text.block", td, arch_.heads, 2 * td, rng);
    text_out_norm_ = nn::LayerNorm::create(params_, "text.out_norm", td);

    time_fc1_ = nn::Linear::create(params_, "time.fc1", 32, arch_.time_dim, rng);
    time_fc2_ = nn::Linear::create(params_, "time.fc2", arch_.time_dim, arch_.time_dim, rng);

    conv_in_ = nn::Conv2d::create(params_, "unet.conv_in", arch_.in_channels, c1, 3, 1, 1, rng);
    rb_down1_ = nn::ResBlock::create(params_, "unet.rb_down1", c1, c1, arch_.time_dim, groups, rng);
    down1_ = nn::Conv2d::create(params_, "unet.down1", c1, c2, 3, 2, 1, rng);
    rb_down2_ = nn::ResBlock::create(params_, "unet.rb_down2", c2, c2, arch_.time_dim, groups, rng);
    ca_down_ = nn::CrossAttention::create(params_, "unet.ca_down", 0, c2, td, arch_.heads, rng);
    down2_ = nn::Conv2d::create(params_, "unet.down2", c2, c2, 3, 2, 1, rng);
    rb_mid1_ = nn::ResBlock::create(params_, "unet.rb_mid1", c2, c2, arch_.time_dim, groups, rng);
    ca_mid_ = nn::CrossAttention::create(params_, "unet.ca_mid", 1, c2, td, arch_.heads, rng);
    rb_mid2_ = nn::ResBlock::create(params_, "unet.rb_mid2", c2, c2, arch_.time_dim, groups, rng);
    up1_ = nn::Conv2d::create(params_, "unet.up1", c2, c2, 3, 1, 1, rng);
    rb_up1_ = nn::ResBlock::create(params_, "unet.rb_up1", 2 * c2, c2, arch_.time_dim, groups, rng);
    ca_up_ = nn::CrossAttention::create(params_, "unet.ca_up", 2, c2, td, arch_.heads, rng);
    up2_ = nn::Conv2d::create(params_, "unet.up2", c2, c1, 3, 1, 1, rng);
    rb_up2_ = nn::ResBlock::create(params_, "unet.rb_up2", 2 * c1, c1, arch_.time_dim, groups, rng);
    out_norm_ = nn::GroupNorm::create(params_, "unet.out_norm", c1, groups);
    // Zero-init output projection: the untrained net predicts zero noise.
    conv_out_ = nn::Conv2d::create(params_, "unet.conv_out", c1, arch_.in_channels, 3, 1, 1, rng,
                                   /*zero_init=*/true);
}

std::vector<int> ToyDenoiser::latent_shape() const {
    return {arch_.in_channels, arch_.image_size, arch_.image_size};
}

ad::Var ToyDenoiser::encode_text_var(const std::vector<int>& token_ids, nn::Binding& bind) const {
    if (static_cast<int>(token_ids.size()) > arch_.max_tokens)
        throw Error("prompt exceeds max token count (" + std::to_string(arch_.max_tokens) + ")");
    for (int id : token_ids)
        if (id < 0 || id >= vocab_.size())
            throw Error("token id out of vocabulary range: " + std::to_string(id));
    std::vector<int> positions(token_ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    Var emb = ops::add(ops::embed_rows(bind(*tok_emb_), token_ids),
                       ops::embed_rows(bind(*pos_emb_), positions));
    Var mixed = text_block_(bind, emb);
    return text_out_norm_(bind, mixed);
}

Tensor ToyDenoiser::text_encode(const std::vector<int>& token_ids) const {
    ad::NoGradGuard ng;
    nn::Binding bind(false);
    return encode_text_var(token_ids, bind)->value;
}

ad::Var ToyDenoiser::forward(const ad::Var& z, int t, const ad::Var& text_ctx, nn::Binding& bind,
                             AttnSink* sink, const InjectionPlan* inject) const {
    if (z->value.shape() != latent_shape())
        throw ShapeMismatchError("latent shape " + z->value.shape_str());
    (void)schedule_.alpha_bar(t);  // range check

    Var temb = ops::silu(time_fc1_(bind, ad::constant(nn::sinusoidal_time_embedding(t, 32))));
    temb = time_fc2_(bind, temb);  // [1, time_dim]

    Var x = conv_in_(bind, z);
    Var d1 = rb_down1_(bind, x, temb);            // [c1, 32, 32]
    x = down1_(bind, d1);                         // [c2, 16, 16]
    Var d2 = rb_down2_(bind, x, temb);
    d2 = ca_down_(bind, d2, text_ctx, sink, inject);
    x = down2_(bind, d2);                         // [c2, 8, 8]
    x = rb_mid1_(bind, x, temb);
    x = ca_mid_(bind, x, text_ctx, sink, inject);
    x = rb_mid2_(bind, x, temb);
    x = ops::upsample_nearest2x(x);               // [c2, 16, 16]
    x = up1_(bind, x);
    x = rb_up1_(bind, ops::concat_chw(x, d2), temb);
    x = ca_up_(bind, x, text_ctx, sink, inject);
    x = ops::upsample_nearest2x(x);               // [c1->, 32, 32]
    x = up2_(bind, x);
    x = rb_up2_(bind, ops::concat_chw(x, d1), temb);
    x = ops::silu(out_norm_(bind, x));
    return conv_out_(bind, x);
}

Tensor ToyDenoiser::predict_noise(const Tensor& z, int t, const Tensor& text_ctx, AttnSink* sink,
                                  const InjectionPlan* inject) const {
    ad::NoGradGuard ng;
    nn::Binding bind(false);
    return forward(ad::constant(z), t, ad::constant(text_ctx), bind, sink, inject)->value;
}

ad::Var ToyDenoiser::predict_noise_var(const ad::Var& z, int t, const ad::Var& text_ctx,
                                       AttnSink* sink, const InjectionPlan* inject) const {
    nn::Binding bind(false);
    return forward(z, t, text_ctx, bind, sink, inject);
}

Tensor ToyDenoiser::encode_image(const Tensor& image01) const {
    if (image01.shape() != latent_shape())
        throw ShapeMismatchError("image shape " + image01.shape_str());
    Tensor z(image01.shape());
    for (std::size_t i = 0; i < z.numel(); ++i)
        z[i] = image01[i] * 2.0 - 1.0;
    return z;
}

Tensor ToyDenoiser::decode_latent(const Tensor& latent) const {
    Tensor img(latent.shape());
    for (std::size_t i = 0; i < img.numel(); ++i)
        img[i] = std::clamp((latent[i] + 1.0) / 2.0, 0.0, 1.0);
    return img;
}

std::vector<CrossAttnLayerInfo> ToyDenoiser::cross_attention_layers() const {
    const int s = arch_.image_size;
    return {
        {0, arch_.heads, s / 2, s / 2},
        {1, arch_.heads, s / 4, s / 4},
        {2, arch_.heads, s / 2, s / 2},
    };
}

}  // namespace mde
