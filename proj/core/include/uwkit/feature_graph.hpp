#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwkit/autograd.hpp"

namespace uwkit {

// Tokens-as-nodes similarity graph over one student feature map. Topology is
// computed from the raw (unmasked) features and frozen; masking only
// replaces node feature rows. Gradients flow through the surviving rows into
// the encoder; the adjacency itself is non-differentiable.
struct FeatureGraph {
    int h = 0, w = 0;
    ag::Var nodes;                            // [hw, c], original features
    ag::Var masked_nodes;                     // [hw, c], masked rows filled
    std::vector<std::vector<int>> neighbors;  // ascending index per node, self included
    std::vector<uint8_t> masked;              // per-node flag
    double mask_fill = 0.0;

    int64_t node_count() const { return nodes ? nodes->value.dim(0) : 0; }
    int64_t masked_count() const;

    // Adjacency dump for inspection (one JSON array of index arrays).
    std::string debug_adjacency_json() const;
};

// Cosine-similarity neighborhoods with a per-node dynamic threshold: theta_k(i)
// is the k-th largest similarity from node i over all nodes (self included),
// and every node with similarity >= theta_k(i) joins (ties included).
// Denominators are clamped at eps = 1e-8. k > hw is clamped to hw with a
// warning on stderr.
FeatureGraph build_graph(const ag::Var& feature_map, int k);

// Exposed for oracle tests: full cosine similarity row of node i.
std::vector<double> cosine_row(const Tensor& nodes, int64_t i, double eps = 1e-8);

// Masks exactly floor(ratio * hw) nodes, chosen uniformly without
// replacement by the seeded generator; topology is unchanged.
FeatureGraph mask_nodes(const FeatureGraph& graph, double ratio, uint64_t seed);

}  // namespace uwkit
