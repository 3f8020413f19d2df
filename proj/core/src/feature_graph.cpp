#include "uwkit/feature_graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "uwkit/common.hpp"
#include "uwkit/rng.hpp"

namespace uwkit {

int64_t FeatureGraph::masked_count() const {
    int64_t n = 0;
    for (uint8_t m : masked) n += m ? 1 : 0;
    return n;
}

std::string FeatureGraph::debug_adjacency_json() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < neighbors.size(); ++i) {
        if (i) os << ",";
        os << "[";
        for (size_t j = 0; j < neighbors[i].size(); ++j) {
            if (j) os << ",";
            os << neighbors[i][j];
        }
        os << "]";
    }
    os << "]";
    return os.str();
}

std::vector<double> cosine_row(const Tensor& nodes, int64_t i, double eps) {
    const int64_t n = nodes.dim(0), c = nodes.dim(1);
    std::vector<double> row(static_cast<size_t>(n));
    double norm_i = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) norm_i += nodes.at(i, ch) * nodes.at(i, ch);
    norm_i = std::sqrt(norm_i);
    for (int64_t j = 0; j < n; ++j) {
        double dot = 0.0, norm_j = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) {
            dot += nodes.at(i, ch) * nodes.at(j, ch);
            norm_j += nodes.at(j, ch) * nodes.at(j, ch);
        }
        norm_j = std::sqrt(norm_j);
        row[static_cast<size_t>(j)] = dot / std::max(norm_i * norm_j, eps);
    }
    return row;
}

FeatureGraph build_graph(const ag::Var& feature_map, int k) {
    if (!feature_map || feature_map->value.ndim() != 3)
        throw ShapeError("build_graph: expects a [h,w,c] feature map");
    const int64_t h = feature_map->value.dim(0), w = feature_map->value.dim(1),
                  c = feature_map->value.dim(2);
    const int64_t hw = h * w;
    if (hw < 1 || c < 1) throw ShapeError("build_graph: empty feature map");
    if (k < 1) throw ConfigError("build_graph: k must be >= 1");
    if (k > hw) {
        std::cerr << "[uwkit] warning: k=" << k << " exceeds node count " << hw
                  << ", clamping to " << hw << "\n";
        k = static_cast<int>(hw);
    }

    FeatureGraph g;
    g.h = static_cast<int>(h);
    g.w = static_cast<int>(w);
    g.nodes = ag::reshape(feature_map, {hw, c});
    g.masked_nodes = g.nodes;
    g.masked.assign(static_cast<size_t>(hw), 0);
    g.neighbors.resize(static_cast<size_t>(hw));

    // Precompute norms once; topology works on detached values.
    const Tensor& nodes = g.nodes->value;
    std::vector<double> norms(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) {
        double s = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) s += nodes.at(i, ch) * nodes.at(i, ch);
        norms[static_cast<size_t>(i)] = std::sqrt(s);
    }
    constexpr double eps = 1e-8;
    std::vector<double> sims(static_cast<size_t>(hw));
    std::vector<double> sorted(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) {
        for (int64_t j = 0; j < hw; ++j) {
            double dot = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) dot += nodes.at(i, ch) * nodes.at(j, ch);
            sims[static_cast<size_t>(j)] =
                dot / std::max(norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)], eps);
        }
        sorted = sims;
        std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(),
                         std::greater<double>());
        const double theta = sorted[static_cast<size_t>(k - 1)];
        auto& nbr = g.neighbors[static_cast<size_t>(i)];
        for (int64_t j = 0; j < hw; ++j)
            if (sims[static_cast<size_t>(j)] >= theta) nbr.push_back(static_cast<int>(j));
    }
    return g;
}

FeatureGraph mask_nodes(const FeatureGraph& graph, double ratio, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mask_nodes: ratio must be in [0,1]");
    const int64_t hw = graph.node_count();
    const int m = static_cast<int>(std::floor(ratio * static_cast<double>(hw)));

    FeatureGraph out = graph;
    out.masked.assign(static_cast<size_t>(hw), 0);
    Rng rng(derive_seed(seed, "node-mask"));
    for (int idx : rng.sample_without_replacement(static_cast<int>(hw), m))
        out.masked[static_cast<size_t>(idx)] = 1;
    out.mask_fill = 0.0;
    out.masked_nodes = ag::row_zero(graph.nodes, out.masked);
    return out;
}

}  // namespace uwkit
