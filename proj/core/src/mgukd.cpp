#include "uwkit/mgukd.hpp"

#include <cmath>

#include "uwkit/common.hpp"
#include "uwkit/rng.hpp"

namespace uwkit {

void GatConfig::validate() const {
    if (layers != 2) throw ConfigError("GatConfig: this build is a two-layer GAT");
    if (heads < 1 || hidden < 1) throw ConfigError("GatConfig: heads and hidden must be >= 1");
    if (leaky_slope < 0.0) throw ConfigError("GatConfig: negative leaky slope");
}

namespace {

GatHead make_head(nn::ParamStore& ps, const std::string& prefix, int in_dim, int out_dim) {
    GatHead h;
    h.w = ps.add_xavier(prefix + ".w", {out_dim, in_dim}, in_dim, out_dim);
    h.a_self = ps.add_xavier(prefix + ".a_self", {1, out_dim}, out_dim, 1);
    h.a_peer = ps.add_xavier(prefix + ".a_peer", {1, out_dim}, out_dim, 1);
    h.a_bias = ps.add_zeros(prefix + ".a_bias", {1});
    return h;
}

// One head's aggregation: U = H W^T, logits factored per node.
ag::Var head_aggregate(const GatHead& head, const ag::Var& nodes,
                       const std::vector<std::vector<int>>& neighbors, double slope) {
    ag::Var u = ag::linear(nodes, head.w, nullptr);
    const int64_t n = u->value.dim(0), c = u->value.dim(1);
    ag::Var si = ag::linear(u, head.a_self, nullptr);  // [n,1]
    // Fold the scorer bias into the self term (softmax is shift-invariant in
    // j, so adding it once per i changes nothing semantically but keeps the
    // hand-evaluated Eq. values exact).
    si = ag::add(si, ag::matmul(ag::constant(Tensor::full({n, 1}, 1.0)),
                                ag::reshape(head.a_bias, {1, 1})));
    ag::Var sj = ag::linear(u, head.a_peer, nullptr);  // [n,1]
    ag::Var si_flat = ag::reshape(si, {n});
    ag::Var sj_flat = ag::reshape(sj, {n});
    (void)c;
    return ag::gat_aggregate(u, si_flat, sj_flat, neighbors, slope);
}

}  // namespace

GatNetwork::GatNetwork(nn::ParamStore& ps, const std::string& prefix, int in_dim, int out_dim,
                       const GatConfig& config)
    : cfg_(config), in_dim_(in_dim), out_dim_(out_dim) {
    cfg_.validate();
    for (int h = 0; h < cfg_.heads; ++h)
        layer1_.push_back(make_head(ps, prefix + ".l1.h" + std::to_string(h), in_dim_, cfg_.hidden));
    const int mid = cfg_.hidden * cfg_.heads;
    for (int h = 0; h < cfg_.heads; ++h)
        layer2_.push_back(make_head(ps, prefix + ".l2.h" + std::to_string(h), mid, out_dim_));
}

ag::Var GatNetwork::reconstruct(const FeatureGraph& graph) const {
    if (!graph.masked_nodes || graph.masked_nodes->value.dim(1) != in_dim_)
        throw ShapeError("GatNetwork::reconstruct: node width " +
                         std::to_string(graph.masked_nodes ? graph.masked_nodes->value.dim(1) : -1) +
                         " does not match W input width " + std::to_string(in_dim_));
    // Layer 1: per-head aggregation, LeakyReLU, concat.
    std::vector<ag::Var> h1;
    h1.reserve(layer1_.size());
    for (const auto& head : layer1_)
        h1.push_back(ag::leaky_relu(
            head_aggregate(head, graph.masked_nodes, graph.neighbors, cfg_.leaky_slope),
            cfg_.leaky_slope));
    ag::Var mid = ag::concat_cols(h1);

    // Layer 2: per-head aggregation, head average, ELU.
    std::vector<ag::Var> h2;
    h2.reserve(layer2_.size());
    for (const auto& head : layer2_)
        h2.push_back(head_aggregate(head, mid, graph.neighbors, cfg_.leaky_slope));
    ag::Var avg = ag::scale(ag::sum_list(h2), 1.0 / static_cast<double>(layer2_.size()));
    ag::Var out = ag::elu(avg);
    return ag::reshape(out, {graph.h, graph.w, out_dim_});
}

std::vector<double> gat_attention(const FeatureGraph& graph, int64_t i, const GatHead& head,
                                  double leaky_slope) {
    const int64_t n = graph.node_count();
    if (i < 0 || i >= n) throw ShapeError("gat_attention: node index out of range");
    const auto& nbr = graph.neighbors[static_cast<size_t>(i)];
    const Tensor& x = graph.masked_nodes->value;
    const int64_t in_dim = x.dim(1);
    const int64_t out_dim = head.w->value.dim(0);
    if (head.w->value.dim(1) != in_dim) throw ShapeError("gat_attention: W width mismatch");

    auto project = [&](int64_t row) {
        std::vector<double> u(static_cast<size_t>(out_dim), 0.0);
        for (int64_t o = 0; o < out_dim; ++o) {
            double s = 0.0;
            for (int64_t c = 0; c < in_dim; ++c) s += head.w->value.at(o, c) * x.at(row, c);
            u[static_cast<size_t>(o)] = s;
        }
        return u;
    };
    const auto ui = project(i);
    double self_term = head.a_bias->value[0];
    for (int64_t o = 0; o < out_dim; ++o) self_term += head.a_self->value.at(0, o) * ui[static_cast<size_t>(o)];

    std::vector<double> logits(nbr.size());
    for (size_t e = 0; e < nbr.size(); ++e) {
        const auto un = project(nbr[e]);
        double peer = 0.0;
        for (int64_t o = 0; o < out_dim; ++o) peer += head.a_peer->value.at(0, o) * un[static_cast<size_t>(o)];
        const double pre = self_term + peer;
        logits[e] = pre > 0.0 ? pre : leaky_slope * pre;
    }
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    double sum = 0.0;
    std::vector<double> weights(logits.size());
    for (size_t e = 0; e < logits.size(); ++e) {
        weights[e] = std::exp(logits[e] - mx);
        sum += weights[e];
    }
    for (auto& w : weights) w /= sum;
    return weights;
}

std::pair<ag::Var, DistillLossReport> mgukd_loss(const std::vector<ag::Var>& teacher_taps,
                                                 const std::vector<ag::Var>& reconstructed,
                                                 double alpha) {
    if (teacher_taps.size() != reconstructed.size())
        throw ShapeError("mgukd_loss: tap layer count mismatch");
    if (teacher_taps.empty()) throw ShapeError("mgukd_loss: no tap layers");
    DistillLossReport report;
    std::vector<ag::Var> terms;
    terms.reserve(teacher_taps.size());
    for (size_t l = 0; l < teacher_taps.size(); ++l) {
        if (!teacher_taps[l]->value.same_shape(reconstructed[l]->value))
            throw ShapeError("mgukd_loss: layer " + std::to_string(l) + " shape mismatch " +
                             teacher_taps[l]->value.shape_str() + " vs " +
                             reconstructed[l]->value.shape_str());
        ag::Var term = ag::mse_loss(reconstructed[l], teacher_taps[l]);
        report.per_layer.push_back(ag::scalar_value(term));
        terms.push_back(term);
    }
    ag::Var total = terms.size() == 1 ? terms[0] : ag::sum_list(terms);
    report.total = ag::scalar_value(total);
    report.weighted = alpha * report.total;
    return {total, report};
}

MgukdDistiller::MgukdDistiller(nn::ParamStore& ps, const std::string& prefix, int student_dim,
                               int teacher_dim, const DistillConfig& config)
    : cfg_(config) {
    if (cfg_.student_layers.empty()) throw ConfigError("MgukdDistiller: no tap layers");
    for (size_t l = 0; l < cfg_.student_layers.size(); ++l)
        gats_.emplace_back(ps, prefix + ".tap" + std::to_string(cfg_.student_layers[l]),
                           student_dim, teacher_dim, cfg_.gat);
}

MgukdDistiller::StepResult MgukdDistiller::distill(const LayerTapOutput& teacher_taps,
                                                   const LayerTapOutput& student_taps,
                                                   uint64_t mask_seed) const {
    const auto pairs = tap_pairs(teacher_taps, student_taps, cfg_.student_layers);
    StepResult res;
    std::vector<ag::Var> teacher_sel, recon;
    for (size_t l = 0; l < pairs.size(); ++l) {
        FeatureGraph g = build_graph(pairs[l].second, cfg_.k);
        g = mask_nodes(g, cfg_.mask_ratio, derive_seed(mask_seed, "tap", l));
        recon.push_back(gats_[l].reconstruct(g));
        teacher_sel.push_back(pairs[l].first);
        res.graphs.push_back(std::move(g));
    }
    auto [loss, report] = mgukd_loss(teacher_sel, recon, cfg_.alpha);
    res.loss = loss;
    res.report = std::move(report);
    return res;
}

}  // namespace uwkit
