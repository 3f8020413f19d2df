#include "uwkit/nn.hpp"

#include <cmath>

#include "uwkit/common.hpp"

namespace uwkit::nn {

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

Var ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
    Var v = ag::leaf(std::move(init), trainable_);
    params_.emplace(name, v);
    return v;
}

Var ParamStore::add_normal(const std::string& name, std::vector<int64_t> shape, double stddev) {
    Rng rng(derive_seed(seed_, name));
    Tensor t(std::move(shape));
    for (auto& x : t.data) x = rng.normal(0.0, stddev);
    return add(name, std::move(t));
}

Var ParamStore::add_xavier(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                           int64_t fan_out) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    return add_normal(name, std::move(shape), stddev);
}

Var ParamStore::add_zeros(const std::string& name, std::vector<int64_t> shape) {
    return add(name, Tensor::zeros(std::move(shape)));
}

Var ParamStore::add_full(const std::string& name, std::vector<int64_t> shape, double value) {
    return add(name, Tensor::full(std::move(shape), value));
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params_) p->grad = Tensor();
}

Linear Linear::create(ParamStore& ps, const std::string& name, int64_t in, int64_t out, bool bias) {
    Linear l;
    l.w = ps.add_xavier(name + ".w", {out, in}, in, out);
    l.b = bias ? ps.add_zeros(name + ".b", {out}) : nullptr;
    return l;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int64_t dim) {
    LayerNorm ln;
    ln.gamma = ps.add_full(name + ".g", {dim}, 1.0);
    ln.beta = ps.add_zeros(name + ".b", {dim});
    return ln;
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& name, int kh, int kw, int64_t cin,
                      int64_t cout, int stride, int pad) {
    Conv2d c;
    const int64_t fan_in = static_cast<int64_t>(kh) * kw * cin;
    c.w = ps.add_xavier(name + ".w", {kh, kw, cin, cout}, fan_in, cout);
    c.b = ps.add_zeros(name + ".b", {cout});
    c.stride = stride;
    c.pad = pad;
    return c;
}

Var MultiHeadAttention::operator()(const Var& q_in, const Var& kv_in) const {
    const int64_t hd = dim / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Var qs = q(q_in), ks = k(kv_in), vs = v(kv_in);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Var qh = ag::slice_cols(qs, h * hd, hd);
        Var kh = ag::slice_cols(ks, h * hd, hd);
        Var vh = ag::slice_cols(vs, h * hd, hd);
        Var scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), att_scale);
        Var attn = ag::softmax_rows(scores);
        head_outs.push_back(ag::matmul(attn, vh));
    }
    return proj(ag::concat_cols(head_outs));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps, const std::string& name, int64_t dim,
                                              int heads) {
    if (dim % heads != 0) throw ConfigError("MultiHeadAttention: dim not divisible by heads");
    MultiHeadAttention m;
    m.q = Linear::create(ps, name + ".q", dim, dim);
    m.k = Linear::create(ps, name + ".k", dim, dim);
    m.v = Linear::create(ps, name + ".v", dim, dim);
    m.proj = Linear::create(ps, name + ".proj", dim, dim);
    m.heads = heads;
    m.dim = dim;
    return m;
}

AdamW::AdamW(ParamStore& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {
    for (const auto& [name, p] : store_.params()) {
        m_.emplace(name, Tensor::zeros(p->value.shape));
        v_.emplace(name, Tensor::zeros(p->value.shape));
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : store_.params()) {
        Tensor& m = m_.at(name);
        Tensor& v = v_.at(name);
        const bool has_grad = p->has_grad_buffer();
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double g = has_grad ? p->grad[i] : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            p->value[i] -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * p->value[i]);
        }
    }
}

}  // namespace uwkit::nn
