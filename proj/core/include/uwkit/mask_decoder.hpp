#pragma once

#include <string>
#include <vector>

#include "uwkit/geometry.hpp"
#include "uwkit/nn.hpp"

namespace uwkit {

struct DecoderConfig {
    int dim = 64;            // token/image width (matches the encoder)
    int blocks = 2;          // two-way block count
    int heads = 4;
    int n_prompt_tokens = 2;
    int mlp_ratio = 2;

    void validate() const;
};

struct DecodeOutput {
    ag::Var mask_logits;  // [4h, 4w], image-grid aligned (4x upscaled map)
    ag::Var iou_score;    // [1], sigmoid output in (0,1)
};

// SAM-style two-way transformer decoder. Learnable [IoU token, mask token]
// are prepended to the per-instance prompt tokens (fixed ordering). Each
// block runs token self-attention, token->image cross-attention, a token
// MLP, then image->token cross-attention. Mask logits are the dot product
// of the upscaled image map (two stride-2 transposed convs) with the mask
// token's readout vector; the IoU score is a sigmoid MLP of the IoU token.
class TwoWayDecoder {
public:
    TwoWayDecoder(nn::ParamStore& ps, const std::string& prefix, const DecoderConfig& config);

    // image_feature: [h, w, dim]; prompt_tokens: [n_prompt_tokens, dim].
    DecodeOutput decode(const ag::Var& image_feature, const ag::Var& prompt_tokens) const;

    const DecoderConfig& config() const { return cfg_; }

private:
    struct Block {
        nn::MultiHeadAttention self_attn, cross_t2i, cross_i2t;
        nn::LayerNorm ln1, ln2, ln3, ln4;
        nn::Linear mlp_in, mlp_out;
    };
    DecoderConfig cfg_;
    ag::Var iou_token_, mask_token_;
    std::vector<Block> blocks_;
    nn::MultiHeadAttention final_t2i_;
    nn::LayerNorm final_ln_;
    ag::Var up1_w_, up1_b_, up2_w_, up2_b_;  // transposed conv params
    nn::Linear mask_mlp_in_, mask_mlp_out_;
    nn::Linear iou_mlp_in_, iou_mlp_out_;
};

// IoU supervision target: intersection over union of two binary masks; a
// pair of empty masks counts as perfect agreement (1.0).
double s_iou_target(const Mask& pred, const Mask& gt);

// Total objective: task + alpha * distillation, as an exact weighted sum.
ag::Var total_loss(const ag::Var& task, const ag::Var& distill, double alpha);

}  // namespace uwkit
