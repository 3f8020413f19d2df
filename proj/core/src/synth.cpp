#include "uwkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uwkit/common.hpp"

namespace uwkit {

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

// Low-frequency field: coarse random grid, bilinearly upsampled.
std::vector<double> smooth_noise(Rng& rng, int size, int coarse, double lo, double hi) {
    std::vector<double> grid(static_cast<size_t>(coarse) * coarse);
    for (auto& g : grid) g = rng.uniform(lo, hi);
    std::vector<double> out(static_cast<size_t>(size) * size);
    for (int r = 0; r < size; ++r) {
        const double fy = static_cast<double>(r) / size * (coarse - 1);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, coarse - 1);
        const double wy = fy - y0;
        for (int c = 0; c < size; ++c) {
            const double fx = static_cast<double>(c) / size * (coarse - 1);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, coarse - 1);
            const double wx = fx - x0;
            out[static_cast<size_t>(r) * size + c] =
                (1 - wy) * ((1 - wx) * grid[static_cast<size_t>(y0) * coarse + x0] +
                            wx * grid[static_cast<size_t>(y0) * coarse + x1]) +
                wy * ((1 - wx) * grid[static_cast<size_t>(y1) * coarse + x0] +
                      wx * grid[static_cast<size_t>(y1) * coarse + x1]);
        }
    }
    return out;
}

struct BlobShape {
    double cx, cy;       // center, pixels
    double ra, rb;       // semi-axes, pixels
    double theta;        // rotation
    double a1, p1, a2, p2;  // radial harmonics

    // Radius multiplier at polar angle phi (in the blob frame).
    double radial(double phi) const {
        return 1.0 + a1 * std::cos(2.0 * phi + p1) + a2 * std::cos(3.0 * phi + p2);
    }

    PolygonRing to_polygon(int vertices) const {
        PolygonRing ring;
        ring.reserve(static_cast<size_t>(vertices) * 2);
        for (int k = 0; k < vertices; ++k) {
            const double phi = 2.0 * std::numbers::pi * k / vertices;
            const double m = radial(phi);
            const double u = std::cos(phi) * ra * m;
            const double v = std::sin(phi) * rb * m;
            ring.push_back(cx + u * std::cos(theta) - v * std::sin(theta));
            ring.push_back(cy + u * std::sin(theta) + v * std::cos(theta));
        }
        return ring;
    }

    // Normalized radial coordinate of a pixel-center point (1.0 = boundary).
    double rho(double px, double py) const {
        const double dx = px - cx, dy = py - cy;
        const double u = dx * std::cos(theta) + dy * std::sin(theta);
        const double v = -dx * std::sin(theta) + dy * std::cos(theta);
        const double un = u / ra, vn = v / rb;
        const double d = std::sqrt(un * un + vn * vn);
        if (d == 0.0) return 0.0;
        const double phi = std::atan2(vn, un);
        return d / radial(phi);
    }
};

}  // namespace

void SceneGenConfig::validate() const {
    if (image_size < 16) throw ConfigError("SceneGenConfig: image_size too small");
    if (num_classes < 1) throw ConfigError("SceneGenConfig: num_classes must be >= 1");
    if (min_instances < 0 || max_instances < min_instances)
        throw ConfigError("SceneGenConfig: empty instance count range");
    if (depth_min < 0.0 || depth_max < depth_min) throw ConfigError("SceneGenConfig: bad depth range");
    for (int ch = 0; ch < 3; ++ch) {
        if (beta_d_range[ch][0] < 0 || beta_d_range[ch][1] < beta_d_range[ch][0] ||
            beta_b_range[ch][0] < 0 || beta_b_range[ch][1] < beta_b_range[ch][0])
            throw ConfigError("SceneGenConfig: bad beta range");
        if (veiling_range[ch][0] < 0 || veiling_range[ch][1] > 1 ||
            veiling_range[ch][1] < veiling_range[ch][0])
            throw ConfigError("SceneGenConfig: bad veiling range");
    }
    if (!(beta_d_range[0][0] > beta_d_range[1][1] && beta_d_range[0][0] > beta_d_range[2][1]))
        throw ConfigError("SceneGenConfig: red attenuation range must lie strictly above green/blue");
}

void SceneSpec::validate() const {
    const int h = clean_image.height, w = clean_image.width;
    if (depth.ndim() != 2 || depth.dim(0) != h || depth.dim(1) != w)
        throw ShapeError("SceneSpec: depth shape does not match clean_image");
    for (double v : clean_image.data)
        if (v < 0.0 || v > 1.0) throw ConfigError("SceneSpec: clean_image out of [0,1]");
    for (double z : depth.data)
        if (z < 0.0) throw ConfigError("SceneSpec: negative depth");
    for (int ch = 0; ch < 3; ++ch) {
        if (beta_d[ch] < 0 || beta_b[ch] < 0) throw ConfigError("SceneSpec: negative beta");
        if (veiling[ch] < 0 || veiling[ch] > 1) throw ConfigError("SceneSpec: veiling out of [0,1]");
    }
    for (const auto& inst : instances) {
        if (inst.mask.height != h || inst.mask.width != w)
            throw ShapeError("SceneSpec: instance mask shape mismatch");
        const auto bb = mask_tight_bbox(inst.mask);
        if (!bb) throw ConfigError("SceneSpec: empty instance mask");
        if (bb->x1 != inst.bbox.x1 || bb->y1 != inst.bbox.y1 || bb->x2 != inst.bbox.x2 ||
            bb->y2 != inst.bbox.y2)
            throw ConfigError("SceneSpec: bbox is not the tight bound of its mask");
    }
}

double degrade_pixel(double radiance, double beta_d, double z, double veiling, double beta_b) {
    const double direct = radiance * std::exp(-beta_d * z);
    const double backscatter = veiling * (1.0 - std::exp(-beta_b * z));
    return std::clamp(direct + backscatter, 0.0, 1.0);
}

AnnotatedImage degrade(const SceneSpec& scene) {
    const int h = scene.clean_image.height, w = scene.clean_image.width;
    if (scene.depth.ndim() != 2 || scene.depth.dim(0) != h || scene.depth.dim(1) != w)
        throw ShapeError("degrade: depth shape does not match clean_image");
    AnnotatedImage out;
    out.image = ImageRGB(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double z = scene.depth.at(r, c);
            for (int ch = 0; ch < 3; ++ch)
                out.image.at(r, c, ch) = degrade_pixel(scene.clean_image.at(r, c, ch),
                                                       scene.beta_d[ch], z, scene.veiling[ch],
                                                       scene.beta_b[ch]);
        }
    out.instances = scene.instances;
    out.source = DataSource::kSynthetic;
    return out;
}

SceneSpec generate_scene(uint64_t seed, const SceneGenConfig& config) {
    config.validate();
    Rng rng(derive_seed(seed, "scene"));
    const int size = config.image_size;

    SceneSpec scene;
    scene.clean_image = ImageRGB(size, size);

    // Background: smooth sandy/rocky field.
    const double bg_base[3] = {0.38, 0.35, 0.30};
    std::vector<double> bg_fields[3];
    for (int ch = 0; ch < 3; ++ch) bg_fields[ch] = smooth_noise(rng, size, 5, -0.08, 0.08);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            for (int ch = 0; ch < 3; ++ch)
                scene.clean_image.at(r, c, ch) =
                    std::clamp(bg_base[ch] + bg_fields[ch][static_cast<size_t>(r) * size + c], 0.0, 1.0);

    // Depth: vertical ramp plus low-frequency variation.
    scene.depth = Tensor({size, size});
    const auto depth_noise = smooth_noise(rng, size, 4, 0.0, 1.0);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double ramp = static_cast<double>(r) / std::max(1, size - 1);
            const double t = std::clamp(0.65 * ramp + 0.35 * depth_noise[static_cast<size_t>(r) * size + c], 0.0, 1.0);
            scene.depth.at(r, c) = config.depth_min + (config.depth_max - config.depth_min) * t;
        }

    for (int ch = 0; ch < 3; ++ch) {
        scene.beta_d[ch] = rng.uniform(config.beta_d_range[ch][0], config.beta_d_range[ch][1]);
        scene.beta_b[ch] = rng.uniform(config.beta_b_range[ch][0], config.beta_b_range[ch][1]);
        scene.veiling[ch] = rng.uniform(config.veiling_range[ch][0], config.veiling_range[ch][1]);
    }

    // Cluster layout: instances gravitate to shared centers with a shared
    // dominant class, so same-class regions recur across the image.
    const int n_instances =
        config.min_instances +
        static_cast<int>(rng.uniform_int(static_cast<uint64_t>(config.max_instances - config.min_instances + 1)));
    const int n_clusters = 1 + static_cast<int>(rng.uniform_int(2));
    struct Cluster {
        double cx, cy;
        int cls;
    };
    std::vector<Cluster> clusters;
    const double margin = 0.16 * size;
    for (int i = 0; i < n_clusters; ++i)
        clusters.push_back({rng.uniform(margin, size - margin), rng.uniform(margin, size - margin),
                            static_cast<int>(rng.uniform_int(static_cast<uint64_t>(config.num_classes)))});

    const int polygon_vertices = 28;
    for (int i = 0; i < n_instances; ++i) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            BlobShape blob;
            int cls;
            if (rng.uniform() < config.cluster_tendency) {
                const auto& cl = clusters[rng.uniform_int(clusters.size())];
                blob.cx = std::clamp(cl.cx + rng.normal(0.0, 0.10 * size), margin, size - margin);
                blob.cy = std::clamp(cl.cy + rng.normal(0.0, 0.10 * size), margin, size - margin);
                cls = (rng.uniform() < 0.8)
                          ? cl.cls
                          : static_cast<int>(rng.uniform_int(static_cast<uint64_t>(config.num_classes)));
            } else {
                blob.cx = rng.uniform(margin, size - margin);
                blob.cy = rng.uniform(margin, size - margin);
                cls = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(config.num_classes)));
            }
            const double radius = rng.uniform(config.min_radius_frac, config.max_radius_frac) * size;
            const double aspect = rng.uniform(0.6, 1.6);
            blob.ra = radius * std::sqrt(aspect);
            blob.rb = radius / std::sqrt(aspect);
            blob.theta = rng.uniform(0.0, std::numbers::pi);
            blob.a1 = rng.uniform(0.0, 0.15);
            blob.p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
            blob.a2 = rng.uniform(0.0, 0.10);
            blob.p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);

            Instance inst;
            inst.class_id = cls;
            inst.polygons = {blob.to_polygon(polygon_vertices)};
            inst.mask = rasterize_polygons(inst.polygons, size, size);
            const auto bb = mask_tight_bbox(inst.mask);
            if (!bb || inst.mask.area() < 16) continue;  // degenerate draw, retry
            inst.bbox = *bb;

            // Paint: per-class hue with per-instance jitter, soft edge, mild
            // radial shading.
            double base_rgb[3];
            const double hue = static_cast<double>(cls) / config.num_classes + rng.uniform(-0.03, 0.03);
            const double val = std::clamp(0.72 + rng.uniform(-0.12, 0.12), 0.0, 1.0);
            hsv_to_rgb(hue, 0.55, val, base_rgb);
            const int r0 = std::max(0, static_cast<int>(inst.bbox.y1) - 2);
            const int r1 = std::min(size - 1, static_cast<int>(inst.bbox.y2) + 2);
            const int c0 = std::max(0, static_cast<int>(inst.bbox.x1) - 2);
            const int c1 = std::min(size - 1, static_cast<int>(inst.bbox.x2) + 2);
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c) {
                    const double rho = blob.rho(c + 0.5, r + 0.5);
                    if (rho > 1.08) continue;
                    const double alpha = std::clamp((1.08 - rho) / 0.16, 0.0, 1.0);
                    const double shade = 1.0 - 0.15 * std::min(rho, 1.0);
                    for (int ch = 0; ch < 3; ++ch) {
                        const double painted = std::clamp(base_rgb[ch] * shade, 0.0, 1.0);
                        scene.clean_image.at(r, c, ch) =
                            (1.0 - alpha) * scene.clean_image.at(r, c, ch) + alpha * painted;
                    }
                }
            scene.instances.push_back(std::move(inst));
            break;
        }
    }
    return scene;
}

}  // namespace uwkit
