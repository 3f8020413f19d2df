#pragma once

#include <string>
#include <vector>

#include "uwkit/encoder.hpp"
#include "uwkit/feature_graph.hpp"
#include "uwkit/nn.hpp"

namespace uwkit {

struct GatConfig {
    int layers = 2;
    int heads = 4;
    int hidden = 32;       // per-head width of the first layer
    double leaky_slope = 0.2;

    void validate() const;
};

// One attention head: shared linear map W plus the pair scorer f_a. The
// scorer weight is stored split so attention logits factor into per-node
// terms: f_a([Wh_i || Wh_j]) = a_i . Wh_i + a_j . Wh_j + bias.
struct GatHead {
    ag::Var w;       // [out, in]
    ag::Var a_self;  // [1, out]
    ag::Var a_peer;  // [1, out]
    ag::Var a_bias;  // [1]
};

// Two-layer multi-head GAT for one tap layer: heads concatenated after the
// first layer (LeakyReLU), averaged at the output layer (ELU), with the
// final width bridging student dim to teacher dim.
class GatNetwork {
public:
    GatNetwork(nn::ParamStore& ps, const std::string& prefix, int in_dim, int out_dim,
               const GatConfig& config);

    // Reconstructs every node of the (masked) graph; output [h, w, out_dim].
    ag::Var reconstruct(const FeatureGraph& graph) const;

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }
    const GatConfig& config() const { return cfg_; }
    const std::vector<GatHead>& layer1() const { return layer1_; }
    const std::vector<GatHead>& layer2() const { return layer2_; }

private:
    GatConfig cfg_;
    int in_dim_ = 0, out_dim_ = 0;
    std::vector<GatHead> layer1_, layer2_;
};

// Attention weights of one head for node i over its neighborhood
// (plain-value path, exposed for oracle tests): softmax over
// leaky_relu(f_a([Wh_i || Wh_n])).
std::vector<double> gat_attention(const FeatureGraph& graph, int64_t i, const GatHead& head,
                                  double leaky_slope);

struct DistillLossReport {
    std::vector<double> per_layer;  // MSE per tap layer
    double total = 0.0;             // plain sum over tap layers
    double weighted = 0.0;          // alpha * total
};

// Multi-layer reconstruction loss: per-layer mean squared error against the
// teacher tap, summed over tap layers.
std::pair<ag::Var, DistillLossReport> mgukd_loss(const std::vector<ag::Var>& teacher_taps,
                                                 const std::vector<ag::Var>& reconstructed,
                                                 double alpha);

struct DistillConfig {
    std::vector<int> student_layers{1, 2, 3, 4};  // 1-indexed
    int k = 11;
    double mask_ratio = 0.65;
    double alpha = 2e-5;
    GatConfig gat;
};

// Per-tap-layer independent GAT stacks bridging student width to teacher width.
class MgukdDistiller {
public:
    MgukdDistiller(nn::ParamStore& ps, const std::string& prefix, int student_dim, int teacher_dim,
                   const DistillConfig& config);

    struct StepResult {
        ag::Var loss;  // scalar
        DistillLossReport report;
        std::vector<FeatureGraph> graphs;  // masked graphs, one per tap layer
    };

    // Builds graphs on the student taps, masks them, reconstructs with the
    // per-layer GATs and evaluates the loss against the paired teacher taps.
    // The teacher must come from a frozen store so no gradient reaches it.
    StepResult distill(const LayerTapOutput& teacher_taps, const LayerTapOutput& student_taps,
                       uint64_t mask_seed) const;

    const DistillConfig& config() const { return cfg_; }
    const std::vector<GatNetwork>& gats() const { return gats_; }

private:
    DistillConfig cfg_;
    std::vector<GatNetwork> gats_;
};

}  // namespace uwkit
