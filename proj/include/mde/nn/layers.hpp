#pragma once

#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mde/ad/ops.hpp"
#include "mde/attention/sink.hpp"
#include "mde/core/rng.hpp"

namespace mde::nn {

struct Param {
    std::string name;
    Tensor value;
};

// Ordered named parameter set. Deque keeps Param addresses stable so layers
// can hold plain pointers.
class ParamStore {
public:
    Param& add(std::string name, Tensor value);
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    std::vector<Param*> all();
    std::vector<const Param*> all() const;
    std::size_t count() const { return params_.size(); }
    // Byte-level hash of every value, in registration order.
    std::uint64_t value_hash() const;

private:
    std::deque<Param> params_;
};

// Maps parameters to graph variables for one forward (or one optimizer
// step). A trainable binding hands out shared leaves so gradients from
// several per-item graphs accumulate in one place.
class Binding {
public:
    explicit Binding(bool trainable) : trainable_(trainable) {}

    ad::Var operator()(const Param& p);
    const ad::Var* var_of(const Param& p) const;

private:
    bool trainable_;
    std::unordered_map<const Param*, ad::Var> vars_;
};

// Initializers.
Tensor kaiming_conv(Rng& rng, int out_c, int in_c, int kh, int kw);
Tensor kaiming_linear(Rng& rng, int out_d, int in_d);
Tensor normal_init(Rng& rng, std::vector<int> shape, double stddev);

struct Linear {
    Param* w = nullptr;
    Param* b = nullptr;
    static Linear create(ParamStore& ps, const std::string& name, int in_d, int out_d, Rng& rng,
                         bool zero_init = false);
    ad::Var operator()(Binding& bind, const ad::Var& x) const;
};

struct Conv2d {
    Param* w = nullptr;
    Param* b = nullptr;
    int stride = 1;
    int pad = 1;
    static Conv2d create(ParamStore& ps, const std::string& name, int in_c, int out_c, int k,
                         int stride, int pad, Rng& rng, bool zero_init = false);
    ad::Var operator()(Binding& bind, const ad::Var& x) const;
};

struct GroupNorm {
    Param* gamma = nullptr;
    Param* beta = nullptr;
    int groups = 8;
    static GroupNorm create(ParamStore& ps, const std::string& name, int channels, int groups);
    ad::Var operator()(Binding& bind, const ad::Var& x) const;
};

struct LayerNorm {
    Param* gamma = nullptr;
    Param* beta = nullptr;
    static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
    ad::Var operator()(Binding& bind, const ad::Var& x) const;
};

// GN -> SiLU -> conv -> +time bias -> GN -> SiLU -> conv, with 1x1 skip on
// channel change.
struct ResBlock {
    GroupNorm n1, n2;
    Conv2d c1, c2;
    Linear time_proj;
    std::optional<Conv2d> skip;
    static ResBlock create(ParamStore& ps, const std::string& name, int in_c, int out_c,
                           int time_dim, int groups, Rng& rng);
    ad::Var operator()(Binding& bind, const ad::Var& x, const ad::Var& time_emb) const;
};

// Multi-head cross-attention over spatial positions; per-head maps are
// reported through the sink and optionally column-substituted before the
// value mix.
struct CrossAttention {
    LayerNorm norm;
    Linear wq, wk, wv, wo;
    int heads = 2;
    int layer_id = 0;
    static CrossAttention create(ParamStore& ps, const std::string& name, int layer_id,
                                 int channels, int ctx_dim, int heads, Rng& rng);
    ad::Var operator()(Binding& bind, const ad::Var& x_chw, const ad::Var& ctx, AttnSink* sink,
                       const InjectionPlan* inject) const;
};

// Pre-LN self-attention + MLP transformer block (token mixing for the text
// encoder).
struct SelfAttentionBlock {
    LayerNorm ln1, ln2;
    Linear wq, wk, wv, wo, fc1, fc2;
    int heads = 2;
    static SelfAttentionBlock create(ParamStore& ps, const std::string& name, int dim, int heads,
                                     int mlp_dim, Rng& rng);
    ad::Var operator()(Binding& bind, const ad::Var& x) const;
};

Tensor sinusoidal_time_embedding(int t, int dim, double max_period = 10000.0);

// Adam with bias correction; state is keyed by parameter address.
class AdamOptimizer {
public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Param*>& params,
              const std::vector<const Tensor*>& grads);
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long step_count_ = 0;
    std::unordered_map<const Param*, std::pair<Tensor, Tensor>> state_;
};

}  // namespace mde::nn
