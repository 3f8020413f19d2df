#include "uwkit/encoder.hpp"

#include <cmath>

#include "uwkit/common.hpp"

namespace uwkit {

void EncoderConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw ConfigError("EncoderConfig: image_size must be a positive multiple of patch_size");
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
        throw ConfigError("EncoderConfig: dim must be a positive multiple of heads");
    if (depth <= 0) throw ConfigError("EncoderConfig: depth must be positive");
}

ViTEncoder::ViTEncoder(nn::ParamStore& ps, const std::string& prefix, const EncoderConfig& config)
    : cfg_(config) {
    cfg_.validate();
    const int64_t patch_dim = static_cast<int64_t>(cfg_.patch_size) * cfg_.patch_size * 3;
    patch_embed_ = nn::Linear::create(ps, prefix + ".patch", patch_dim, cfg_.dim);
    pos_embed_ = ps.add_normal(prefix + ".pos", {cfg_.token_count(), cfg_.dim}, 0.02);
    blocks_.reserve(static_cast<size_t>(cfg_.depth));
    for (int l = 0; l < cfg_.depth; ++l) {
        const std::string bp = prefix + ".blk" + std::to_string(l);
        Block b;
        b.ln1 = nn::LayerNorm::create(ps, bp + ".ln1", cfg_.dim);
        b.ln2 = nn::LayerNorm::create(ps, bp + ".ln2", cfg_.dim);
        b.attn = nn::MultiHeadAttention::create(ps, bp + ".attn", cfg_.dim, cfg_.heads);
        b.mlp_in = nn::Linear::create(ps, bp + ".mlp1", cfg_.dim, 4 * cfg_.dim);
        b.mlp_out = nn::Linear::create(ps, bp + ".mlp2", 4 * cfg_.dim, cfg_.dim);
        blocks_.push_back(std::move(b));
    }
}

LayerTapOutput ViTEncoder::encode(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != cfg_.image_size || image.dim(1) != cfg_.image_size ||
        image.dim(2) != 3)
        throw ShapeError("ViTEncoder::encode: expected image " +
                         std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_size) +
                         "x3, got " + image.shape_str());

    const int side = cfg_.tokens_per_side();
    const int p = cfg_.patch_size;
    const int64_t patch_dim = static_cast<int64_t>(p) * p * 3;

    // Patchify (input is data, not a differentiable leaf).
    Tensor patches({static_cast<int64_t>(side) * side, patch_dim});
    for (int py = 0; py < side; ++py)
        for (int px = 0; px < side; ++px) {
            const int64_t row = static_cast<int64_t>(py) * side + px;
            int64_t k = 0;
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int ch = 0; ch < 3; ++ch)
                        patches.at(row, k++) = image.at(py * p + dy, px * p + dx, ch);
        }

    ag::Var x = ag::add(patch_embed_(ag::constant(std::move(patches))), pos_embed_);

    LayerTapOutput taps;
    taps.reserve(static_cast<size_t>(cfg_.depth));
    for (const auto& b : blocks_) {
        ag::Var h = b.ln1(x);
        x = ag::add(x, b.attn(h, h));
        x = ag::add(x, b.mlp_out(ag::gelu(b.mlp_in(b.ln2(x)))));
        taps.push_back(ag::reshape(x, {side, side, cfg_.dim}));
    }
    return taps;
}

int map_tap_layer(int student_layer, int depth_student, int depth_teacher) {
    const auto mapped = static_cast<int>(std::llround(
        static_cast<double>(student_layer) * depth_teacher / static_cast<double>(depth_student)));
    return std::clamp(mapped, 1, depth_teacher);
}

std::vector<std::pair<ag::Var, ag::Var>> tap_pairs(const LayerTapOutput& teacher,
                                                   const LayerTapOutput& student,
                                                   const std::vector<int>& student_layers) {
    if (student_layers.empty()) throw ConfigError("tap_pairs: no tap layers configured");
    std::vector<int> layers = student_layers;
    std::sort(layers.begin(), layers.end());
    std::vector<std::pair<ag::Var, ag::Var>> out;
    out.reserve(layers.size());
    const int ds = static_cast<int>(student.size());
    const int dt = static_cast<int>(teacher.size());
    for (int l : layers) {
        if (l < 1 || l > ds)
            throw ConfigError("tap_pairs: student layer " + std::to_string(l) + " out of range");
        const int tl = map_tap_layer(l, ds, dt);
        out.emplace_back(teacher[static_cast<size_t>(tl - 1)], student[static_cast<size_t>(l - 1)]);
    }
    return out;
}

}  // namespace uwkit
