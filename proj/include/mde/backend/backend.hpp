#pragma once

#include <vector>

#include "mde/ad/graph.hpp"
#include "mde/attention/sink.hpp"
#include "mde/backend/schedule.hpp"
#include "mde/core/errors.hpp"
#include "mde/core/tensor.hpp"

namespace mde {

struct CrossAttnLayerInfo {
    int layer_id = 0;
    int heads = 0;
    int h = 0;
    int w = 0;
};

// Text-conditioned denoiser abstraction. The toy implementation below is
// the only in-tree backend; a full-scale model plugs in behind the same
// surface (text_encode feeds predict_noise, the codec maps images to the
// latent space, cross_attention_layers describes what the sink will see).
class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;

    virtual std::vector<int> latent_shape() const = 0;
    virtual const NoiseSchedule& schedule() const = 0;

    // Token ids -> embedding sequence [n_tokens, ctx_dim].
    virtual Tensor text_encode(const std::vector<int>& token_ids) const = 0;

    virtual Tensor predict_noise(const Tensor& z, int t, const Tensor& text_ctx,
                                 AttnSink* sink = nullptr,
                                 const InjectionPlan* inject = nullptr) const = 0;

    // Image <-> latent codec; images are [3,H,W] in [0,1].
    virtual Tensor encode_image(const Tensor& image01) const = 0;
    virtual Tensor decode_latent(const Tensor& latent) const = 0;

    virtual std::vector<CrossAttnLayerInfo> cross_attention_layers() const = 0;

    // Differentiable forward for inference-time optimization; backends
    // without gradient support keep the default.
    virtual bool supports_gradients() const { return false; }
    virtual ad::Var predict_noise_var(const ad::Var& z, int t, const ad::Var& text_ctx,
                                      AttnSink* sink = nullptr,
                                      const InjectionPlan* inject = nullptr) const {
        (void)z;
        (void)t;
        (void)text_ctx;
        (void)sink;
        (void)inject;
        throw Error("backend does not support gradient paths");
    }
};

}  // namespace mde
