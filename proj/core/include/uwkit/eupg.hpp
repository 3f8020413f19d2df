#pragma once

#include <string>
#include <vector>

#include "uwkit/geometry.hpp"
#include "uwkit/nn.hpp"
#include "uwkit/rng.hpp"
#include "uwkit/synth.hpp"

namespace uwkit {

struct EupgConfig {
    int num_classes = 4;
    int feature_dim = 64;      // encoder/decoder token width
    bool use_channel_attention = true;  // ablation hook: gate forced to 1 when off
    int ca_reduction = 4;
    int rpn_channels = 64;
    std::vector<double> anchor_scales{2.0, 4.0, 8.0};  // anchor side = scale * stride
    std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
    double nms_iou = 0.7;
    int pre_nms_top = 512;
    int post_nms_train = 48;
    int post_nms_eval = 48;
    double rpn_pos_iou = 0.7;
    double rpn_neg_iou = 0.3;
    int rpn_sample_count = 64;   // anchors per image in the objectness loss
    int roi_size = 14;
    int prompt_conv_channels = 16;
    int prompt_hidden = 128;
    int n_prompt_tokens = 2;

    void validate() const;
};

// ---- anchors and box deltas --------------------------------------------------

// One anchor set for a feature level: centers on the level's stride grid,
// sides scale * stride per configured scale/ratio.
std::vector<Box> make_anchors(int grid_h, int grid_w, double stride,
                              const std::vector<double>& scales,
                              const std::vector<double>& ratios);

// Faster-RCNN style box parameterization.
std::array<double, 4> encode_box_delta(const Box& anchor, const Box& target);
Box decode_box_delta(const Box& anchor, const std::array<double, 4>& delta);

// Greedy NMS by descending score; ties broken by index (stable).
// Returns kept indices in score order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_threshold, int max_keep);

// ---- channel attention ---------------------------------------------------------

// Shared two-layer 1x1 squeeze stack over global max and average pooled
// channel statistics; sigmoid of the summed branches gates every channel.
class ChannelAttention {
public:
    ChannelAttention(nn::ParamStore& ps, const std::string& prefix, int channels, int reduction);
    ag::Var gate(const ag::Var& feature) const;        // [c], in (0,1)
    ag::Var operator()(const ag::Var& feature) const;  // gated map, shape preserved
private:
    nn::Linear squeeze_, expand_;
};

// ---- proposals ----------------------------------------------------------------

struct ProposalSet {
    std::vector<Box> boxes;        // clipped to image bounds
    std::vector<double> scores;    // descending after NMS
    std::vector<int> source_scale; // 2 or 4: which upsampled map produced it
};

struct RpnLevelForward {
    int upsample = 2;          // 2 or 4
    double stride = 0.0;       // image pixels per cell
    std::vector<Box> anchors;  // grid-major, then anchor index
    ag::Var obj_logits;        // [n_anchors, 1]
    ag::Var box_deltas;        // [n_anchors, 4]
};

struct RpnTargets {
    std::vector<int8_t> label;        // 1 positive, 0 negative, -1 ignore
    std::vector<int> matched_gt;      // valid for positives
    int positives = 0;
};

// Anchor labeling: IoU >= pos_iou with any ground truth is positive, the
// best anchor per ground truth is positive regardless (argmax fallback),
// IoU < neg_iou negative, the rest ignored.
RpnTargets rpn_targets(const std::vector<Box>& anchors, const std::vector<Box>& gt,
                       double pos_iou, double neg_iou);

// Fixed 2D sinusoidal positional encoding, [h, w, dim].
Tensor sinusoidal_position_encoding(int h, int w, int dim);

// ---- the generator -------------------------------------------------------------

class Eupg {
public:
    Eupg(nn::ParamStore& ps, const std::string& prefix, const EupgConfig& config);

    const EupgConfig& config() const { return cfg_; }

    // Channel-attended map (or the input itself when CA is disabled).
    ag::Var attend(const ag::Var& feature) const;

    // Runs the shared conv tower + heads on the 2x and 4x upsampled maps of
    // the channel-attended feature. image_size fixes anchor geometry.
    std::vector<RpnLevelForward> rpn_forward(const ag::Var& attended, int image_size) const;

    // Decodes, clips, NMS-filters proposals from the level forwards.
    ProposalSet make_proposals(const std::vector<RpnLevelForward>& levels, int image_size,
                               int post_nms_top) const;

    // Objectness CE over a seeded anchor sample (all positives up to a cap,
    // negatives topped up to rpn_sample_count) plus smooth-L1 (beta = 1) on
    // positive anchor deltas; each term averaged over its own count.
    // Warns and proceeds negatives-only when no anchor is positive.
    ag::Var rpn_loss(const std::vector<RpnLevelForward>& levels, const std::vector<Box>& gt_boxes,
                     uint64_t sample_seed) const;

    struct Prompts {
        ag::Var tokens;        // [n_boxes, n_prompt_tokens * feature_dim]
        ag::Var class_logits;  // [n_boxes, num_classes + 1], background last
    };

    // RoIAlign on (feature + positional encoding) at the pre-attention map,
    // then conv/flatten/MLP into prompt tokens and class logits.
    Prompts prompts_for_boxes(const ag::Var& feature, const std::vector<Box>& boxes,
                              int image_size) const;

private:
    EupgConfig cfg_;
    ChannelAttention ca_;
    nn::Conv2d tower_, obj_head_, delta_head_;
    nn::Conv2d prompt_conv_;
    nn::Linear mlp_in_, mlp_out_, classifier_;
};

}  // namespace uwkit
