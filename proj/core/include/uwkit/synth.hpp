#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uwkit/geometry.hpp"
#include "uwkit/image.hpp"
#include "uwkit/rng.hpp"

namespace uwkit {

// One labeled instance. Masks are binary at image resolution; the polygon
// rings (when known) are the serialization-of-record so an annotation
// round-trips through COCO form without drift.
struct Instance {
    Mask mask;
    int class_id = 0;
    Box bbox;
    std::vector<PolygonRing> polygons;
};

enum class DataSource { kSynthetic, kCoco };

struct AnnotatedImage {
    ImageRGB image;
    std::vector<Instance> instances;
    DataSource source = DataSource::kSynthetic;
    int id = 0;
    std::string file_name;
};

// Ground-truth synthetic scene prior to underwater degradation.
struct SceneSpec {
    ImageRGB clean_image;           // radiance J per channel, in [0,1]
    Tensor depth;                   // [h, w] meters, >= 0
    std::array<double, 3> beta_d;   // attenuation per RGB channel, 1/m
    std::array<double, 3> beta_b;   // backscatter per RGB channel, 1/m
    std::array<double, 3> veiling;  // veiling light per channel, in [0,1]
    std::vector<Instance> instances;

    void validate() const;  // throws on invariant violation
};

struct SceneGenConfig {
    int image_size = 128;
    int num_classes = 4;
    int min_instances = 2;
    int max_instances = 6;
    double cluster_tendency = 0.7;  // probability an instance joins a cluster
    // Per-channel coefficient ranges {lo, hi}; R, G, B order. Red attenuation
    // must be strictly highest: beta_d red lo > green hi and > blue hi.
    std::array<std::array<double, 2>, 3> beta_d_range{{{0.35, 0.50}, {0.06, 0.12}, {0.03, 0.08}}};
    std::array<std::array<double, 2>, 3> beta_b_range{{{0.08, 0.16}, {0.10, 0.20}, {0.12, 0.24}}};
    std::array<std::array<double, 2>, 3> veiling_range{{{0.02, 0.08}, {0.25, 0.45}, {0.35, 0.55}}};
    double depth_min = 1.0;
    double depth_max = 8.0;
    double min_radius_frac = 0.07;  // instance radius relative to image size
    double max_radius_frac = 0.17;

    void validate() const;  // throws ConfigError
};

// Applies the underwater image-formation model per pixel and channel:
// direct attenuated signal plus depth-dependent backscatter toward the
// veiling light, clamped to [0,1]. Annotations pass through unchanged.
AnnotatedImage degrade(const SceneSpec& scene);

// Scalar version of the same formation model (exposed for tests/tools).
double degrade_pixel(double radiance, double beta_d, double z, double veiling, double beta_b);

// Deterministic scene synthesis: clustered soft-edged blob instances over a
// smooth background, smooth depth ramp plus low-frequency noise, and
// per-channel coefficients drawn from the configured ranges.
SceneSpec generate_scene(uint64_t seed, const SceneGenConfig& config);

}  // namespace uwkit
