#include "mde/nn/layers.hpp"

#include <cmath>
#include <cstring>

#include "mde/core/errors.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde::nn {

namespace ops = mde::ad::ops;
using ad::Var;

Param& ParamStore::add(std::string name, Tensor value) {
    if (find(name))
        throw Error("duplicate parameter name: " + name);
    params_.push_back(Param{std::move(name), std::move(value)});
    return params_.back();
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name)
            return &p;
    return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name)
            return &p;
    return nullptr;
}

std::vector<Param*> ParamStore::all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_)
        out.push_back(&p);
    return out;
}

std::vector<const Param*> ParamStore::all() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (const auto& p : params_)
        out.push_back(&p);
    return out;
}

std::uint64_t ParamStore::value_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
        for (double v : p.value.vec()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

ad::Var Binding::operator()(const Param& p) {
    auto it = vars_.find(&p);
    if (it != vars_.end())
        return it->second;
    ad::Var v = trainable_ ? ad::leaf(p.value) : ad::constant(p.value);
    vars_.emplace(&p, v);
    return v;
}

const ad::Var* Binding::var_of(const Param& p) const {
    auto it = vars_.find(&p);
    return it == vars_.end() ? nullptr : &it->second;
}

Tensor kaiming_conv(Rng& rng, int out_c, int in_c, int kh, int kw) {
    const double std = std::sqrt(2.0 / (in_c * kh * kw));
    Tensor t({out_c, in_c, kh, kw});
    for (auto& v : t.vec())
        v = rng.normal() * std;
    return t;
}

Tensor kaiming_linear(Rng& rng, int out_d, int in_d) {
    const double std = std::sqrt(2.0 / in_d);
    Tensor t({out_d, in_d});
    for (auto& v : t.vec())
        v = rng.normal() * std;
    return t;
}

Tensor normal_init(Rng& rng, std::vector<int> shape, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.vec())
        v = rng.normal() * stddev;
    return t;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in_d, int out_d, Rng& rng,
                      bool zero_init) {
    Linear l;
    l.w = &ps.add(name + ".w",
                  zero_init ? Tensor({out_d, in_d}) : kaiming_linear(rng, out_d, in_d));
    l.b = &ps.add(name + ".b", Tensor({out_d}));
    return l;
}

Var Linear::operator()(Binding& bind, const Var& x) const {
    return ops::linear(x, bind(*w), bind(*b));
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& name, int in_c, int out_c, int k,
                      int stride, int pad, Rng& rng, bool zero_init) {
    Conv2d c;
    c.w = &ps.add(name + ".w",
                  zero_init ? Tensor({out_c, in_c, k, k}) : kaiming_conv(rng, out_c, in_c, k, k));
    c.b = &ps.add(name + ".b", Tensor({out_c}));
    c.stride = stride;
    c.pad = pad;
    return c;
}

Var Conv2d::operator()(Binding& bind, const Var& x) const {
    return ops::conv2d(x, bind(*w), bind(*b), stride, pad);
}

GroupNorm GroupNorm::create(ParamStore& ps, const std::string& name, int channels, int groups) {
    GroupNorm g;
    g.gamma = &ps.add(name + ".gamma", Tensor::full({channels}, 1.0));
    g.beta = &ps.add(name + ".beta", Tensor({channels}));
    g.groups = groups;
    return g;
}

Var GroupNorm::operator()(Binding& bind, const Var& x) const {
    return ops::group_norm(x, bind(*gamma), bind(*beta), groups);
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
    LayerNorm l;
    l.gamma = &ps.add(name + ".gamma", Tensor::full({dim}, 1.0));
    l.beta = &ps.add(name + ".beta", Tensor({dim}));
    return l;
}

Var LayerNorm::operator()(Binding& bind, const Var& x) const {
    return ops::layer_norm_rows(x, bind(*gamma), bind(*beta));
}

ResBlock ResBlock::create(ParamStore& ps, const std::string& name, int in_c, int out_c,
                          int time_dim, int groups, Rng& rng) {
    ResBlock r;
    r.n1 = GroupNorm::create(ps, name + ".n1", in_c, groups);
    r.c1 = Conv2d::create(ps, name + ".c1", in_c, out_c, 3, 1, 1, rng);
    r.time_proj = Linear::create(ps, name + ".t", time_dim, out_c, rng);
    r.n2 = GroupNorm::create(ps, name + ".n2", out_c, groups);
    r.c2 = Conv2d::create(ps, name + ".c2", out_c, out_c, 3, 1, 1, rng);
    if (in_c != out_c)
        r.skip = Conv2d::create(ps, name + ".skip", in_c, out_c, 1, 1, 0, rng);
    return r;
}

Var ResBlock::operator()(Binding& bind, const Var& x, const Var& time_emb) const {
    Var h = n1(bind, x);
    h = ops::silu(h);
    h = c1(bind, h);
    Var tb = time_proj(bind, time_emb);  // [1, out_c]
    h = ops::add_channel_bias(h, ops::reshape(tb, {h->value.size(0)}));
    h = n2(bind, h);
    h = ops::silu(h);
    h = c2(bind, h);
    Var residual = skip ? (*skip)(bind, x) : x;
    return ops::add(h, residual);
}

CrossAttention CrossAttention::create(ParamStore& ps, const std::string& name, int layer_id,
                                      int channels, int ctx_dim, int heads, Rng& rng) {
    CrossAttention c;
    c.norm = LayerNorm::create(ps, name + ".norm", channels);
    c.wq = Linear::create(ps, name + ".wq", channels, channels, rng);
    c.wk = Linear::create(ps, name + ".wk", ctx_dim, channels, rng);
    c.wv = Linear::create(ps, name + ".wv", ctx_dim, channels, rng);
    c.wo = Linear::create(ps, name + ".wo", channels, channels, rng);
    c.heads = heads;
    c.layer_id = layer_id;
    return c;
}

Var CrossAttention::operator()(Binding& bind, const Var& x_chw, const Var& ctx, AttnSink* sink,
                               const InjectionPlan* inject) const {
    const int c = x_chw->value.size(0);
    const int h = x_chw->value.size(1);
    const int w = x_chw->value.size(2);
    const int dk = c / heads;

    Var rows = ops::chw_to_rows(x_chw);  // [P, c]
    Var normed = norm(bind, rows);
    Var q = wq(bind, normed);
    Var k = wk(bind, ctx);
    Var v = wv(bind, ctx);

    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
        Var qh = ops::slice_cols(q, hd * dk, (hd + 1) * dk);
        Var kh = ops::slice_cols(k, hd * dk, (hd + 1) * dk);
        Var vh = ops::slice_cols(v, hd * dk, (hd + 1) * dk);
        Var scores = ops::mul_scalar(ops::matmul_nt(qh, kh), 1.0 / std::sqrt(dk));
        Var attn = ops::softmax_rows(scores);  // [P, n_tokens]
        if (sink)
            sink->capture({layer_id, hd, h, w, attn});
        Var mixed = attn;
        if (inject)
            mixed = ops::inject_columns(attn, inject->map_for(layer_id, hd), inject->sources);
        head_outs.push_back(ops::matmul(mixed, vh));
    }
    Var merged = heads == 1 ? head_outs[0] : ops::concat_cols(head_outs);
    Var out = wo(bind, merged);
    return ops::add(ops::rows_to_chw(out, c, h, w), x_chw);
}

SelfAttentionBlock SelfAttentionBlock::create(ParamStore& ps, const std::string& name, int dim,
                                              int heads, int mlp_dim, Rng& rng) {
    SelfAttentionBlock s;
    s.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
    s.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
    s.wq = Linear::create(ps, name + ".wq", dim, dim, rng);
    s.wk = Linear::create(ps, name + ".wk", dim, dim, rng);
    s.wv = Linear::create(ps, name + ".wv", dim, dim, rng);
    s.wo = Linear::create(ps, name + ".wo", dim, dim, rng);
    s.fc1 = Linear::create(ps, name + ".fc1", dim, mlp_dim, rng);
    s.fc2 = Linear::create(ps, name + ".fc2", mlp_dim, dim, rng);
    s.heads = heads;
    return s;
}

Var SelfAttentionBlock::operator()(Binding& bind, const Var& x) const {
    const int dim = x->value.size(1);
    const int dk = dim / heads;
    Var normed = ln1(bind, x);
    Var q = wq(bind, normed);
    Var k = wk(bind, normed);
    Var v = wv(bind, normed);
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
        Var qh = ops::slice_cols(q, hd * dk, (hd + 1) * dk);
        Var kh = ops::slice_cols(k, hd * dk, (hd + 1) * dk);
        Var vh = ops::slice_cols(v, hd * dk, (hd + 1) * dk);
        Var attn = ops::softmax_rows(ops::mul_scalar(ops::matmul_nt(qh, kh), 1.0 / std::sqrt(dk)));
        outs.push_back(ops::matmul(attn, vh));
    }
    Var merged = heads == 1 ? outs[0] : ops::concat_cols(outs);
    Var after_attn = ops::add(x, wo(bind, merged));
    Var mlp = fc2(bind, ops::silu(fc1(bind, ln2(bind, after_attn))));
    return ops::add(after_attn, mlp);
}

Tensor sinusoidal_time_embedding(int t, int dim, double max_period) {
    Tensor emb({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(max_period) * i / half);
        emb.at(0, i) = std::cos(t * freq);
        emb.at(0, half + i) = std::sin(t * freq);
    }
    return emb;
}

void AdamOptimizer::step(const std::vector<Param*>& params,
                         const std::vector<const Tensor*>& grads) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, step_count_);
    const double bc2 = 1.0 - std::pow(beta2_, step_count_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param* p = params[i];
        const Tensor* g = grads[i];
        if (!g || g->numel() == 0)
            continue;
        auto& [m, v] = state_[p];
        if (m.numel() != p->value.numel()) {
            m = Tensor(p->value.shape());
            v = Tensor(p->value.shape());
        }
        for (std::size_t j = 0; j < p->value.numel(); ++j) {
            const double gj = (*g)[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p->value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace mde::nn
