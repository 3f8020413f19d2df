#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace uwkit {

// Deterministic random streams. std:: distributions are implementation
// defined, so every draw here is implemented by hand on top of a
// xoshiro256** engine: equal seeds give bit-identical streams on every
// platform, which the reproducibility contracts depend on.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of entropy.
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n), n > 0. Unbiased (rejection sampling).
    uint64_t uniform_int(uint64_t n);
    // Standard normal via Box-Muller (second value cached).
    double normal();
    double normal(double mean, double stddev);

    // First k entries of a Fisher-Yates shuffle of [0, n): a uniform sample
    // of k distinct indices, in draw order.
    std::vector<int> sample_without_replacement(int n, int k);
    // Full permutation of [0, n).
    std::vector<int> permutation(int n);

private:
    uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// Stable 64-bit stream derivation: hash a label plus integer coordinates
// into a seed. Used to give every consumer (init of one tensor, the mask
// draw of one step/layer, the augmentation of one image, ...) its own
// stream that does not depend on program order.
uint64_t derive_seed(uint64_t base_seed, std::string_view label);
uint64_t derive_seed(uint64_t base_seed, std::string_view label, uint64_t a);
uint64_t derive_seed(uint64_t base_seed, std::string_view label, uint64_t a, uint64_t b);

}  // namespace uwkit
