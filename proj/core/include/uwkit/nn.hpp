#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uwkit/autograd.hpp"
#include "uwkit/rng.hpp"

namespace uwkit::nn {

using ag::Var;

// Named parameter registry. Iteration order is lexicographic (std::map), so
// optimizer sweeps are deterministic regardless of registration order. Each
// tensor is initialized from its own RNG stream derived from (seed, name):
// two stores built with the same seed hold identical values even if modules
// are constructed in different orders.
class ParamStore {
public:
    ParamStore(uint64_t seed, bool trainable) : seed_(seed), trainable_(trainable) {}

    // Existing entry lookup (used after checkpoint load).
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    Var add(const std::string& name, Tensor init);
    // Gaussian(0, std).
    Var add_normal(const std::string& name, std::vector<int64_t> shape, double stddev);
    // Xavier/Glorot normal for a [fan_out, fan_in]-style shape.
    Var add_xavier(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                   int64_t fan_out);
    Var add_zeros(const std::string& name, std::vector<int64_t> shape);
    Var add_full(const std::string& name, std::vector<int64_t> shape, double value);

    void zero_grads();
    uint64_t seed() const { return seed_; }
    bool trainable() const { return trainable_; }
    const std::map<std::string, Var>& params() const { return params_; }
    std::map<std::string, Var>& params() { return params_; }

private:
    uint64_t seed_;
    bool trainable_;
    std::map<std::string, Var> params_;
};

// ---- standard modules -------------------------------------------------------

struct Linear {
    Var w;  // [out, in]
    Var b;  // [out] (may be null)
    Var operator()(const Var& x) const { return ag::linear(x, w, b); }
    static Linear create(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
                         bool bias = true);
};

struct LayerNorm {
    Var gamma, beta;
    Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
    static LayerNorm create(ParamStore& ps, const std::string& name, int64_t dim);
};

struct Conv2d {
    Var w;  // [kh, kw, cin, cout]
    Var b;  // [cout]
    int stride = 1, pad = 0;
    Var operator()(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
    static Conv2d create(ParamStore& ps, const std::string& name, int kh, int kw, int64_t cin,
                         int64_t cout, int stride, int pad);
};

// Multi-head self/cross attention over token matrices [n, dim].
struct MultiHeadAttention {
    Linear q, k, v, proj;
    int heads = 1;
    int64_t dim = 0;
    // q_in: [nq, dim], kv_in: [nk, dim].
    Var operator()(const Var& q_in, const Var& kv_in) const;
    static MultiHeadAttention create(ParamStore& ps, const std::string& name, int64_t dim,
                                     int heads);
};

// ---- optimizer ----------------------------------------------------------------

struct AdamWConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-2;
};

// Decoupled weight decay Adam. Holds first/second moment per parameter;
// state is checkpointable.
class AdamW {
public:
    AdamW(ParamStore& store, AdamWConfig cfg);

    void step();
    int64_t step_count() const { return t_; }

    // Serialization hooks (checkpoint module packs these).
    std::map<std::string, Tensor>& moment1() { return m_; }
    std::map<std::string, Tensor>& moment2() { return v_; }
    void set_step_count(int64_t t) { t_ = t; }
    const AdamWConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    ParamStore& store_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace uwkit::nn
