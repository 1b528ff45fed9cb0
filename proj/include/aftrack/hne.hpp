#pragma once

#include <atomic>
#include <utility>

#include "aftrack/losses.hpp"
#include "aftrack/model.hpp"

namespace aftrack::hne {

/// Hard-negative-emphasis knobs. `k` positives and up to `k` hard negatives
/// per pair, plus the ground-truth box itself (default total 11).
struct HneConfig {
    bool enabled = true;
    int k = 5;
    Real t_high = 0.8;
    Real t_low = 0.3;
    Real nms_threshold = 0.7;
    Real margin = 2.0;
    int embed_dim = 128;
    int top_m = 64; // locations considered before suppression
};

/// Call counters; training with the module disabled must leave every one at
/// zero.
struct Counters {
    std::int64_t select_candidates = 0;
    std::int64_t classify_candidates = 0;
    std::int64_t random_shift = 0;
    std::int64_t embed = 0;
    std::int64_t loss = 0;

    void reset() { *this = Counters{}; }
};

inline Counters& counters() {
    static Counters c;
    return c;
}

/// Decodes boxes at the top_m highest-scoring grid locations and suppresses
/// overlaps. score [H*W] foreground score, reg planar [4][H][W] side
/// distances (pixels). Returned boxes are in instance coordinates, score
/// order.
inline std::vector<Box> select_candidates(const std::vector<Real>& score,
                                          const std::vector<Real>& reg, const GridSpec& spec,
                                          int top_m, Real nms_thr) {
    ++counters().select_candidates;
    const std::int64_t hw = static_cast<std::int64_t>(spec.width) * spec.height;
    check(static_cast<std::int64_t>(score.size()) == hw, "select_candidates: score size mismatch");
    check(static_cast<std::int64_t>(reg.size()) == 4 * hw, "select_candidates: reg size mismatch");

    std::vector<int> order(hw);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
    const int m = std::min<std::int64_t>(top_m, hw);

    std::vector<Box> boxes;
    std::vector<Real> box_scores;
    for (int r = 0; r < m; ++r) {
        const int idx = order[r];
        const int gx = idx % spec.width;
        const int gy = idx / spec.width;
        const Point anchor = grid_to_image(gx, gy, spec);
        const LTRB v{std::max(reg[idx], 1e-3), std::max(reg[hw + idx], 1e-3),
                     std::max(reg[2 * hw + idx], 1e-3), std::max(reg[3 * hw + idx], 1e-3)};
        boxes.push_back(decode_box(anchor, v));
        box_scores.push_back(score[idx]);
    }
    const std::vector<int> kept = nms(boxes, box_scores, nms_thr);
    std::vector<Box> out;
    out.reserve(kept.size());
    for (int idx : kept) out.push_back(boxes[idx]);
    return out;
}

/// Splits candidates by IoU with the ground truth: above t_high positive,
/// below t_low hard negative, the band in between discarded.
inline std::pair<std::vector<Box>, std::vector<Box>> classify_candidates(
    const std::vector<Box>& cands, const Box& gt, Real t_high, Real t_low) {
    ++counters().classify_candidates;
    check(t_low < t_high, "classify_candidates: thresholds out of order");
    std::vector<Box> positives, hard_negatives;
    for (const Box& c : cands) {
        const Real overlap = iou(c, gt);
        if (overlap > t_high)
            positives.push_back(c);
        else if (overlap < t_low)
            hard_negatives.push_back(c);
    }
    return {std::move(positives), std::move(hard_negatives)};
}

/// Translated copies of the ground truth, bounded so every copy keeps
/// IoU > t_high with the original. t_high = 1 degenerates to exact copies.
inline std::vector<Box> random_shift_positives(const Box& gt, int count, Real t_high, Rng& rng) {
    ++counters().random_shift;
    check(count >= 0, "random_shift_positives: negative count");
    check(t_high > 0 && t_high <= 1, "random_shift_positives: t_high outside (0,1]");
    // per-axis kept fraction f satisfies f^2 / (2 - f^2) > t_high
    const Real f = std::sqrt(2.0 * t_high / (1.0 + t_high));
    const Real max_frac = 0.95 * (1.0 - f);
    std::vector<Box> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const Real dx = rng.uniform(-max_frac, max_frac) * gt.width();
        const Real dy = rng.uniform(-max_frac, max_frac) * gt.height();
        out.push_back(gt.translated(dx, dy));
    }
    return out;
}

/// Region sets feeding Eq.-style contrastive training for one pair.
struct RoISet {
    std::vector<Box> positives;      // shifted copies plus the gt itself (last)
    std::vector<Box> hard_negatives; // classified candidates, score order
    Box exemplar_box;                // gt on the exemplar crop
};

/// Builds the RoI set for one pair from the fused maps.
inline RoISet build_roi_set(const std::vector<Real>& score_fg, const std::vector<Real>& reg,
                            const Box& gt, const Box& exemplar_gt, const GridSpec& spec,
                            const HneConfig& cfg, Rng& rng) {
    RoISet set;
    set.exemplar_box = exemplar_gt;
    const std::vector<Box> cands =
        select_candidates(score_fg, reg, spec, cfg.top_m, cfg.nms_threshold);
    auto [cand_pos, cand_neg] = classify_candidates(cands, gt, cfg.t_high, cfg.t_low);
    (void)cand_pos; // balance comes from shifted copies of the gt instead
    if (static_cast<int>(cand_neg.size()) > cfg.k) cand_neg.resize(static_cast<size_t>(cfg.k));
    set.hard_negatives = std::move(cand_neg);
    set.positives = random_shift_positives(gt, cfg.k, cfg.t_high, rng);
    set.positives.push_back(gt);
    return set;
}

namespace detail {

inline nn::Tape::Roi to_feature_roi(int sample, const Box& b, int image_size, int feat_size) {
    const Real off = ModelConfig::kStride / 2;
    const Real s = ModelConfig::kStride;
    auto clamp = [&](Real v) {
        return std::min<Real>(std::max<Real>(v, 0.0), static_cast<Real>(feat_size) - 0.01);
    };
    (void)image_size;
    nn::Tape::Roi roi;
    roi.n = sample;
    roi.x0 = clamp((b.x0 - off) / s);
    roi.y0 = clamp((b.y0 - off) / s);
    roi.x1 = clamp((b.x1 - off) / s);
    roi.y1 = clamp((b.y1 - off) / s);
    if (roi.x1 - roi.x0 < 0.25) roi.x1 = std::min<Real>(roi.x0 + 0.25, feat_size - 0.01);
    if (roi.y1 - roi.y0 < 0.25) roi.y1 = std::min<Real>(roi.y0 + 0.25, feat_size - 0.01);
    return roi;
}

} // namespace detail

/// Full hard-negative-emphasis objective for a forward batch: builds RoI
/// sets from the fused maps, embeds exemplar and instance regions through
/// the shared embedding head, and applies the contrastive loss against each
/// pair's exemplar vector. Pairs with no surviving hard negative contribute
/// their positives only.
inline nn::Var hne_loss(nn::Tape& tape, Model& model, Model::PairForward& fw,
                        const std::vector<Box>& gts, const std::vector<Box>& exemplar_gts,
                        const HneConfig& cfg, Rng& rng) {
    ++counters().loss;
    const int batch = fw.fused.score->val.shape[0];
    check(static_cast<int>(gts.size()) == batch && static_cast<int>(exemplar_gts.size()) == batch,
          "hne_loss: gt count must match the batch");
    const ModelConfig& mc = model.config();
    const GridSpec spec = mc.grid();
    const std::int64_t hw = static_cast<std::int64_t>(spec.width) * spec.height;

    std::vector<nn::Tape::Roi> z_rois, x_rois;
    std::vector<losses::RoiGroup> groups;
    for (int n = 0; n < batch; ++n) {
        // foreground probability of the fused score map, ranking only
        std::vector<Real> score_fg(hw);
        std::vector<Real> reg(4 * hw);
        const Real* s0 = fw.fused.score->val.data() + static_cast<std::int64_t>(n) * 2 * hw;
        for (std::int64_t i = 0; i < hw; ++i)
            score_fg[i] = 1.0 / (1.0 + std::exp(s0[i] - s0[hw + i]));
        const Real* r0 = fw.fused.reg->val.data() + static_cast<std::int64_t>(n) * 4 * hw;
        std::copy(r0, r0 + 4 * hw, reg.begin());

        const RoISet set = build_roi_set(score_fg, reg, gts[n], exemplar_gts[n], spec, cfg, rng);

        losses::RoiGroup grp;
        grp.anchor_row = static_cast<int>(z_rois.size());
        z_rois.push_back(
            detail::to_feature_roi(n, set.exemplar_box, mc.exemplar_size, mc.exemplar_feat()));
        for (const Box& b : set.positives) {
            grp.rows.push_back(static_cast<int>(x_rois.size()));
            grp.labels.push_back(1);
            x_rois.push_back(detail::to_feature_roi(n, b, mc.instance_size, mc.instance_feat()));
        }
        for (const Box& b : set.hard_negatives) {
            grp.rows.push_back(static_cast<int>(x_rois.size()));
            grp.labels.push_back(0);
            x_rois.push_back(detail::to_feature_roi(n, b, mc.instance_size, mc.instance_feat()));
        }
        groups.push_back(std::move(grp));
    }

    counters().embed += 2;
    nn::Var z_emb = model.embed_rois(tape, fw.z_embed_feat, z_rois);
    nn::Var x_emb = model.embed_rois(tape, fw.x_embed_feat, x_rois);
    return losses::contrastive_embeddings(tape, z_emb, x_emb, groups, cfg.margin);
}

} // namespace aftrack::hne
