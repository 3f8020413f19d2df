#pragma once

#include <string>
#include <utility>
#include <vector>

#include "uwkit/nn.hpp"

namespace uwkit {

enum class EncoderRole { kTeacher, kStudent };

struct EncoderConfig {
    int image_size = 128;
    int patch_size = 16;
    int depth = 8;
    int dim = 128;
    int heads = 8;
    EncoderRole role = EncoderRole::kTeacher;

    int tokens_per_side() const { return image_size / patch_size; }
    int token_count() const { return tokens_per_side() * tokens_per_side(); }
    void validate() const;
};

// Per-layer feature maps, one [h, w, dim] entry per block; the final entry
// is the map consumed by the prompt generator and decoder.
using LayerTapOutput = std::vector<ag::Var>;

// Patch-embedding transformer encoder with pre-norm blocks and learned
// positional embeddings. Exposes every block's output (after both residual
// additions) as a distillation tap.
class ViTEncoder {
public:
    ViTEncoder(nn::ParamStore& ps, const std::string& prefix, const EncoderConfig& config);

    // image: [image_size, image_size, 3] in [0,1].
    LayerTapOutput encode(const Tensor& image) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::Linear mlp_in, mlp_out;
    };
    EncoderConfig cfg_;
    nn::Linear patch_embed_;
    ag::Var pos_embed_;
    std::vector<Block> blocks_;
};

// Pairs student tap layers (1-indexed) with proportionally mapped teacher
// layers: teacher layer = round(l * depth_t / depth_s), clamped to
// [1, depth_t]. Returned in ascending student layer order.
std::vector<std::pair<ag::Var, ag::Var>> tap_pairs(const LayerTapOutput& teacher,
                                                   const LayerTapOutput& student,
                                                   const std::vector<int>& student_layers);

// Index-level version of the proportional mapping (1-indexed).
int map_tap_layer(int student_layer, int depth_student, int depth_teacher);

}  // namespace uwkit
