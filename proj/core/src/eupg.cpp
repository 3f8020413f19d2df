#include "uwkit/eupg.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "uwkit/common.hpp"

namespace uwkit {

void EupgConfig::validate() const {
    if (num_classes < 1) throw ConfigError("EupgConfig: num_classes must be >= 1");
    if (feature_dim < 1 || rpn_channels < 1) throw ConfigError("EupgConfig: bad channel widths");
    if (ca_reduction < 1 || feature_dim % ca_reduction != 0)
        throw ConfigError("EupgConfig: ca_reduction must divide feature_dim");
    if (anchor_scales.empty() || anchor_ratios.empty())
        throw ConfigError("EupgConfig: anchors must have at least one scale and ratio");
    if (n_prompt_tokens < 1) throw ConfigError("EupgConfig: n_prompt_tokens must be >= 1");
    if (roi_size < 1) throw ConfigError("EupgConfig: roi_size must be >= 1");
}

std::vector<Box> make_anchors(int grid_h, int grid_w, double stride,
                              const std::vector<double>& scales,
                              const std::vector<double>& ratios) {
    std::vector<Box> anchors;
    anchors.reserve(static_cast<size_t>(grid_h) * grid_w * scales.size() * ratios.size());
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx) {
            const double cx = (gx + 0.5) * stride;
            const double cy = (gy + 0.5) * stride;
            for (double s : scales)
                for (double r : ratios) {
                    const double side = s * stride;
                    const double w = side * std::sqrt(r);
                    const double h = side / std::sqrt(r);
                    anchors.push_back(Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
                }
        }
    return anchors;
}

std::array<double, 4> encode_box_delta(const Box& anchor, const Box& target) {
    const double aw = anchor.w(), ah = anchor.h();
    const double acx = anchor.x1 + aw / 2, acy = anchor.y1 + ah / 2;
    const double tw = target.w(), th = target.h();
    const double tcx = target.x1 + tw / 2, tcy = target.y1 + th / 2;
    return {(tcx - acx) / aw, (tcy - acy) / ah, std::log(tw / aw), std::log(th / ah)};
}

Box decode_box_delta(const Box& anchor, const std::array<double, 4>& delta) {
    const double aw = anchor.w(), ah = anchor.h();
    const double acx = anchor.x1 + aw / 2, acy = anchor.y1 + ah / 2;
    // Clamp log-size deltas so garbage logits cannot overflow exp.
    const double dw = std::clamp(delta[2], -6.0, 6.0), dh = std::clamp(delta[3], -6.0, 6.0);
    const double cx = acx + delta[0] * aw, cy = acy + delta[1] * ah;
    const double w = aw * std::exp(dw), h = ah * std::exp(dh);
    return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_threshold, int max_keep) {
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    std::vector<int> keep;
    std::vector<uint8_t> suppressed(boxes.size(), 0);
    for (int idx : order) {
        if (suppressed[static_cast<size_t>(idx)]) continue;
        keep.push_back(idx);
        if (static_cast<int>(keep.size()) >= max_keep) break;
        for (int other : order) {
            if (other == idx || suppressed[static_cast<size_t>(other)]) continue;
            if (box_iou(boxes[static_cast<size_t>(idx)], boxes[static_cast<size_t>(other)]) >=
                iou_threshold)
                suppressed[static_cast<size_t>(other)] = 1;
        }
    }
    return keep;
}

ChannelAttention::ChannelAttention(nn::ParamStore& ps, const std::string& prefix, int channels,
                                   int reduction) {
    squeeze_ = nn::Linear::create(ps, prefix + ".squeeze", channels, channels / reduction);
    expand_ = nn::Linear::create(ps, prefix + ".expand", channels / reduction, channels);
}

ag::Var ChannelAttention::gate(const ag::Var& feature) const {
    const int64_t c = feature->value.dim(2);
    auto branch = [&](const ag::Var& pooled) {
        return expand_(ag::relu(squeeze_(ag::reshape(pooled, {1, c}))));
    };
    ag::Var a_max = branch(ag::global_max_pool(feature));
    ag::Var a_avg = branch(ag::global_avg_pool(feature));
    return ag::reshape(ag::sigmoid(ag::add(a_max, a_avg)), {c});
}

ag::Var ChannelAttention::operator()(const ag::Var& feature) const {
    return ag::channel_scale(feature, gate(feature));
}

RpnTargets rpn_targets(const std::vector<Box>& anchors, const std::vector<Box>& gt, double pos_iou,
                       double neg_iou) {
    RpnTargets t;
    t.label.assign(anchors.size(), 0);
    t.matched_gt.assign(anchors.size(), -1);
    if (gt.empty()) return t;  // everything stays negative

    std::vector<double> best_iou(anchors.size(), 0.0);
    std::vector<double> best_per_gt(gt.size(), -1.0);
    for (size_t a = 0; a < anchors.size(); ++a) {
        for (size_t g = 0; g < gt.size(); ++g) {
            const double iou = box_iou(anchors[a], gt[g]);
            if (iou > best_iou[a]) {
                best_iou[a] = iou;
                t.matched_gt[a] = static_cast<int>(g);
            }
            best_per_gt[g] = std::max(best_per_gt[g], iou);
        }
        if (best_iou[a] >= pos_iou)
            t.label[a] = 1;
        else if (best_iou[a] < neg_iou)
            t.label[a] = 0;
        else
            t.label[a] = -1;
    }
    // Argmax fallback: the best anchor(s) for each ground truth are positive
    // even below the threshold.
    for (size_t g = 0; g < gt.size(); ++g) {
        if (best_per_gt[g] <= 0.0) continue;
        for (size_t a = 0; a < anchors.size(); ++a) {
            if (box_iou(anchors[a], gt[g]) == best_per_gt[g]) {
                t.label[a] = 1;
                t.matched_gt[a] = static_cast<int>(g);
            }
        }
    }
    for (int8_t l : t.label) t.positives += (l == 1) ? 1 : 0;
    return t;
}

Tensor sinusoidal_position_encoding(int h, int w, int dim) {
    Tensor pe({h, w, dim});
    const int half = dim / 2;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int i = 0; i < half; ++i) {
                const double freq = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(half));
                const double vy = r * freq, vx = c * freq;
                pe.at(r, c, i) = (i % 2 == 0) ? std::sin(vy) : std::cos(vy);
                pe.at(r, c, half + i) = (i % 2 == 0) ? std::sin(vx) : std::cos(vx);
            }
    return pe;
}

Eupg::Eupg(nn::ParamStore& ps, const std::string& prefix, const EupgConfig& config)
    : cfg_(config), ca_(ps, prefix + ".ca", config.feature_dim, config.ca_reduction) {
    cfg_.validate();
    const int a = static_cast<int>(cfg_.anchor_scales.size() * cfg_.anchor_ratios.size());
    tower_ = nn::Conv2d::create(ps, prefix + ".rpn.tower", 3, 3, cfg_.feature_dim,
                                cfg_.rpn_channels, 1, 1);
    obj_head_ = nn::Conv2d::create(ps, prefix + ".rpn.obj", 1, 1, cfg_.rpn_channels, a, 1, 0);
    delta_head_ =
        nn::Conv2d::create(ps, prefix + ".rpn.delta", 1, 1, cfg_.rpn_channels, 4 * a, 1, 0);
    prompt_conv_ = nn::Conv2d::create(ps, prefix + ".prompt.conv", 3, 3, cfg_.feature_dim,
                                      cfg_.prompt_conv_channels, 1, 1);
    const int64_t flat =
        static_cast<int64_t>(cfg_.roi_size) * cfg_.roi_size * cfg_.prompt_conv_channels;
    mlp_in_ = nn::Linear::create(ps, prefix + ".prompt.mlp1", flat, cfg_.prompt_hidden);
    mlp_out_ = nn::Linear::create(ps, prefix + ".prompt.mlp2", cfg_.prompt_hidden,
                                  static_cast<int64_t>(cfg_.n_prompt_tokens) * cfg_.feature_dim);
    classifier_ = nn::Linear::create(ps, prefix + ".prompt.cls", flat, cfg_.num_classes + 1);
}

ag::Var Eupg::attend(const ag::Var& feature) const {
    return cfg_.use_channel_attention ? ca_(feature) : feature;
}

std::vector<RpnLevelForward> Eupg::rpn_forward(const ag::Var& attended, int image_size) const {
    const int64_t h = attended->value.dim(0);
    const int a = static_cast<int>(cfg_.anchor_scales.size() * cfg_.anchor_ratios.size());
    std::vector<RpnLevelForward> levels;
    for (int up : {2, 4}) {
        RpnLevelForward lvl;
        lvl.upsample = up;
        const int gh = static_cast<int>(h) * up, gw = gh;
        lvl.stride = static_cast<double>(image_size) / gh;
        ag::Var x = ag::upsample_bilinear(attended, gh, gw);
        x = ag::relu(tower_(x));
        ag::Var obj = obj_head_(x);       // [gh, gw, a]
        ag::Var deltas = delta_head_(x);  // [gh, gw, 4a]
        lvl.obj_logits = ag::reshape(obj, {static_cast<int64_t>(gh) * gw * a, 1});
        lvl.box_deltas = ag::reshape(deltas, {static_cast<int64_t>(gh) * gw * a, 4});
        lvl.anchors = make_anchors(gh, gw, lvl.stride, cfg_.anchor_scales, cfg_.anchor_ratios);
        levels.push_back(std::move(lvl));
    }
    return levels;
}

ProposalSet Eupg::make_proposals(const std::vector<RpnLevelForward>& levels, int image_size,
                                 int post_nms_top) const {
    struct Cand {
        Box box;
        double score;
        int scale;
    };
    std::vector<Cand> cands;
    for (const auto& lvl : levels) {
        const auto& logits = lvl.obj_logits->value;
        const auto& deltas = lvl.box_deltas->value;
        std::vector<int> order(lvl.anchors.size());
        std::iota(order.begin(), order.end(), 0);
        const int take = std::min<int>(cfg_.pre_nms_top, static_cast<int>(order.size()));
        std::partial_sort(order.begin(), order.begin() + take, order.end(),
                          [&](int x, int y) { return logits[x] > logits[y]; });
        order.resize(static_cast<size_t>(take));
        for (int i : order) {
            const Box decoded = decode_box_delta(
                lvl.anchors[static_cast<size_t>(i)],
                {deltas.at(i, 0), deltas.at(i, 1), deltas.at(i, 2), deltas.at(i, 3)});
            const Box clipped = decoded.clipped(image_size, image_size);
            if (!clipped.valid()) continue;
            cands.push_back({clipped, logits[i], lvl.upsample});
        }
    }
    std::vector<Box> boxes;
    std::vector<double> scores;
    boxes.reserve(cands.size());
    for (const auto& c : cands) {
        boxes.push_back(c.box);
        scores.push_back(c.score);
    }
    ProposalSet out;
    for (int idx : nms(boxes, scores, cfg_.nms_iou, post_nms_top)) {
        out.boxes.push_back(cands[static_cast<size_t>(idx)].box);
        out.scores.push_back(cands[static_cast<size_t>(idx)].score);
        out.source_scale.push_back(cands[static_cast<size_t>(idx)].scale);
    }
    return out;
}

ag::Var Eupg::rpn_loss(const std::vector<RpnLevelForward>& levels,
                       const std::vector<Box>& gt_boxes, uint64_t sample_seed) const {
    std::vector<Box> anchors;
    std::vector<int> level_of, index_in_level;
    for (size_t l = 0; l < levels.size(); ++l)
        for (size_t a = 0; a < levels[l].anchors.size(); ++a) {
            anchors.push_back(levels[l].anchors[a]);
            level_of.push_back(static_cast<int>(l));
            index_in_level.push_back(static_cast<int>(a));
        }
    const RpnTargets targets = rpn_targets(anchors, gt_boxes, cfg_.rpn_pos_iou, cfg_.rpn_neg_iou);

    std::vector<int> positives, negatives;
    for (size_t a = 0; a < anchors.size(); ++a) {
        if (targets.label[a] == 1)
            positives.push_back(static_cast<int>(a));
        else if (targets.label[a] == 0)
            negatives.push_back(static_cast<int>(a));
    }
    if (positives.empty() && !gt_boxes.empty())
        std::cerr << "[uwkit] warning: no positive anchors for this image, "
                     "objectness trains on negatives only\n";

    Rng rng(derive_seed(sample_seed, "rpn-sample"));
    auto subsample = [&rng](std::vector<int>& pool, int want) {
        if (static_cast<int>(pool.size()) <= want) return;
        std::vector<int> pick = rng.sample_without_replacement(static_cast<int>(pool.size()), want);
        std::sort(pick.begin(), pick.end());
        std::vector<int> sel;
        sel.reserve(static_cast<size_t>(want));
        for (int i : pick) sel.push_back(pool[static_cast<size_t>(i)]);
        pool = std::move(sel);
    };
    subsample(positives, cfg_.rpn_sample_count / 4);
    subsample(negatives, cfg_.rpn_sample_count - static_cast<int>(positives.size()));

    std::vector<int> sample = positives;
    sample.insert(sample.end(), negatives.begin(), negatives.end());
    ag::Var obj_loss = ag::constant(Tensor::scalar(0.0));
    if (!sample.empty()) {
        std::vector<ag::Var> logit_rows;
        Tensor obj_targets({static_cast<int64_t>(sample.size()), 1});
        for (size_t s = 0; s < sample.size(); ++s) {
            const int a = sample[s];
            logit_rows.push_back(ag::gather_rows(levels[static_cast<size_t>(level_of[static_cast<size_t>(a)])].obj_logits,
                                                 {index_in_level[static_cast<size_t>(a)]}));
            obj_targets.at(static_cast<int64_t>(s), 0) =
                targets.label[static_cast<size_t>(a)] == 1 ? 1.0 : 0.0;
        }
        obj_loss = ag::bce_with_logits_loss(ag::concat_rows(logit_rows), obj_targets);
    }

    ag::Var delta_loss = ag::constant(Tensor::scalar(0.0));
    if (!positives.empty()) {
        std::vector<ag::Var> delta_rows;
        Tensor delta_targets({static_cast<int64_t>(positives.size()), 4});
        for (size_t s = 0; s < positives.size(); ++s) {
            const int a = positives[s];
            delta_rows.push_back(ag::gather_rows(levels[static_cast<size_t>(level_of[static_cast<size_t>(a)])].box_deltas,
                                                 {index_in_level[static_cast<size_t>(a)]}));
            const auto d = encode_box_delta(
                anchors[static_cast<size_t>(a)],
                gt_boxes[static_cast<size_t>(targets.matched_gt[static_cast<size_t>(a)])]);
            for (int k = 0; k < 4; ++k)
                delta_targets.at(static_cast<int64_t>(s), k) = d[static_cast<size_t>(k)];
        }
        delta_loss = ag::smooth_l1_loss(ag::concat_rows(delta_rows), delta_targets, 1.0);
    }
    return ag::add(obj_loss, delta_loss);
}

Eupg::Prompts Eupg::prompts_for_boxes(const ag::Var& feature, const std::vector<Box>& boxes,
                                      int image_size) const {
    if (boxes.empty()) throw ShapeError("prompts_for_boxes: no boxes");
    const int64_t h = feature->value.dim(0), w = feature->value.dim(1), c = feature->value.dim(2);
    ag::Var enriched =
        ag::add(feature, ag::constant(sinusoidal_position_encoding(
                             static_cast<int>(h), static_cast<int>(w), static_cast<int>(c))));
    Tensor box_tensor({static_cast<int64_t>(boxes.size()), 4});
    for (size_t b = 0; b < boxes.size(); ++b) {
        box_tensor.at(static_cast<int64_t>(b), 0) = boxes[b].x1;
        box_tensor.at(static_cast<int64_t>(b), 1) = boxes[b].y1;
        box_tensor.at(static_cast<int64_t>(b), 2) = boxes[b].x2;
        box_tensor.at(static_cast<int64_t>(b), 3) = boxes[b].y2;
    }
    const double scale = static_cast<double>(h) / image_size;
    ag::Var rois = ag::roi_align(enriched, box_tensor, scale, cfg_.roi_size);  // [n,os,os,c]

    const int64_t n = static_cast<int64_t>(boxes.size());
    const int64_t flat =
        static_cast<int64_t>(cfg_.roi_size) * cfg_.roi_size * cfg_.prompt_conv_channels;
    ag::Var rois_flat =
        ag::reshape(rois, {n, static_cast<int64_t>(cfg_.roi_size) * cfg_.roi_size * c});
    std::vector<ag::Var> flat_rows;
    flat_rows.reserve(static_cast<size_t>(n));
    for (int64_t b = 0; b < n; ++b) {
        ag::Var roi = ag::reshape(ag::slice_rows(rois_flat, b, 1), {cfg_.roi_size, cfg_.roi_size, c});
        ag::Var conv = ag::relu(prompt_conv_(roi));
        flat_rows.push_back(ag::reshape(conv, {1, flat}));
    }
    ag::Var flat_all = ag::concat_rows(flat_rows);  // [n, flat]
    Prompts out;
    out.tokens = mlp_out_(ag::relu(mlp_in_(flat_all)));  // [n, tokens*dim]
    out.class_logits = classifier_(flat_all);            // [n, classes+1]
    return out;
}

}  // namespace uwkit
