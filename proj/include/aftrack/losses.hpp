#pragma once

#include <memory>
#include <vector>

#include "aftrack/autodiff.hpp"
#include "aftrack/geometry.hpp"

namespace aftrack {

/// Weights of the composite training objective.
struct LossWeights {
    Real score = 1.0;
    Real centerness = 1.0;
    Real regression = 1.0;
    Real contrastive = 0.1;
};

/// A batch of anchor-to-vector distances with binary same/other labels.
struct ContrastiveBatch {
    std::vector<Real> distances;
    std::vector<int> labels; // 1 = positive (same object), 0 = hard negative
    Real margin = 2.0;
};

/// Contrastive loss over precomputed distances:
/// (1/N) sum_i [ y_i d_i^2 + (1-y_i) max(0, m-d_i)^2 ].
inline Real contrastive_loss(const ContrastiveBatch& batch) {
    check(!batch.distances.empty() && batch.distances.size() == batch.labels.size(),
          "contrastive_loss: batch invariants violated");
    Real acc = 0;
    for (size_t i = 0; i < batch.distances.size(); ++i) {
        const Real d = batch.distances[i];
        if (batch.labels[i] == 1) {
            acc += d * d;
        } else {
            const Real gap = std::max<Real>(0, batch.margin - d);
            acc += gap * gap;
        }
    }
    return acc / static_cast<Real>(batch.distances.size());
}

/// Composite objective.
inline Real total_loss(Real score, Real cen, Real reg, Real contra, const LossWeights& w) {
    return w.score * score + w.centerness * cen + w.regression * reg + w.contrastive * contra;
}

namespace losses {

constexpr Real kProbEps = 1e-7;

/// Focal classification loss over a 2-channel logit map (channel 0 =
/// background, channel 1 = foreground), averaged over every location.
/// labels [N,1,H,W] in {0,1}.
inline nn::Var focal_loss(nn::Tape& tape, nn::Var logits, const Tensor& labels,
                          Real alpha = 0.25, Real gamma = 2.0) {
    const auto& s = logits->val.shape;
    check(s.size() == 4 && s[1] == 2, "focal_loss: [N,2,H,W] logits required");
    check(labels.shape == std::vector<int>({s[0], 1, s[2], s[3]}),
          "focal_loss: label shape mismatch");
    const int N = s[0], H = s[2], W = s[3];
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const Real inv_count = 1.0 / static_cast<Real>(N * hw);

    auto& out = tape.result({1}, {logits});
    Real acc = 0;
    for (int n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < hw; ++i) {
            const Real z0 = logits->val.v[(static_cast<std::int64_t>(n) * 2) * hw + i];
            const Real z1 = logits->val.v[(static_cast<std::int64_t>(n) * 2 + 1) * hw + i];
            const Real p1 = 1.0 / (1.0 + std::exp(z0 - z1));
            const bool pos = labels.v[n * hw + i] > 0.5;
            const Real pt0 = pos ? p1 : 1.0 - p1;
            const Real pt = std::min(std::max(pt0, kProbEps), 1.0 - kProbEps);
            const Real at = pos ? alpha : 1.0 - alpha;
            acc += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
        }
    out.val.v[0] = acc * inv_count;

    if (out.needs_grad) {
        auto labels_copy = std::make_shared<Tensor>(labels);
        out.back = [logits, labels_copy, alpha, gamma, N, hw, inv_count](nn::Tape::Node& out) {
            const Real g = out.grad.v[0] * inv_count;
            for (int n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < hw; ++i) {
                    const std::int64_t i0 = (static_cast<std::int64_t>(n) * 2) * hw + i;
                    const std::int64_t i1 = (static_cast<std::int64_t>(n) * 2 + 1) * hw + i;
                    const Real p1 = 1.0 / (1.0 + std::exp(logits->val.v[i0] - logits->val.v[i1]));
                    const bool pos = labels_copy->v[n * hw + i] > 0.5;
                    const Real pt0 = pos ? p1 : 1.0 - p1;
                    if (pt0 <= kProbEps || pt0 >= 1.0 - kProbEps) continue; // clamped: flat
                    const Real at = pos ? alpha : 1.0 - alpha;
                    const Real focal_term =
                        gamma > 0 ? gamma * std::pow(1.0 - pt0, gamma - 1) * std::log(pt0) : 0.0;
                    const Real dL_dpt = at * (focal_term - std::pow(1.0 - pt0, gamma) / pt0);
                    const Real dpt_du = (pos ? 1.0 : -1.0) * p1 * (1.0 - p1); // u = z1 - z0
                    const Real du = g * dL_dpt * dpt_du;
                    logits->grad.v[i1] += du;
                    logits->grad.v[i0] -= du;
                }
        };
    }
    return &out;
}

/// Binary cross entropy on predicted centerness, probability domain,
/// averaged over masked locations; 0 when the mask is empty. Predictions
/// are clamped away from {0,1} before the logs.
inline Real centerness_bce(const Tensor& pred_probs, const Tensor& targets, const Tensor& mask) {
    check(pred_probs.shape == targets.shape && pred_probs.shape == mask.shape,
          "centerness_bce: shape mismatch");
    Real acc = 0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < pred_probs.numel(); ++i) {
        if (mask.v[i] <= 0.5) continue;
        const Real t = targets.v[i];
        check(t >= 0 && t <= 1, "centerness_bce: targets must lie in [0,1]");
        const Real p = std::min(std::max(pred_probs.v[i], kProbEps), 1.0 - kProbEps);
        acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
        ++count;
    }
    return count == 0 ? 0.0 : acc / static_cast<Real>(count);
}

/// Logit-domain form of centerness_bce used by the training graph
/// (identical value up to the probability clamp).
inline nn::Var centerness_bce_logits(nn::Tape& tape, nn::Var logits, const Tensor& targets,
                                     const Tensor& mask) {
    check(logits->val.shape == targets.shape && logits->val.shape == mask.shape,
          "centerness_bce_logits: shape mismatch");
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        if (mask.v[i] > 0.5) ++count;

    auto& out = tape.result({1}, {logits});
    if (count == 0) {
        out.val.v[0] = 0;
        return &out;
    }
    Real acc = 0;
    for (std::int64_t i = 0; i < logits->val.numel(); ++i) {
        if (mask.v[i] <= 0.5) continue;
        const Real x = logits->val.v[i];
        const Real t = targets.v[i];
        acc += std::max<Real>(x, 0) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    out.val.v[0] = acc / static_cast<Real>(count);

    if (out.needs_grad) {
        auto t_copy = std::make_shared<Tensor>(targets);
        auto m_copy = std::make_shared<Tensor>(mask);
        out.back = [logits, t_copy, m_copy, count](nn::Tape::Node& out) {
            const Real g = out.grad.v[0] / static_cast<Real>(count);
            for (std::int64_t i = 0; i < logits->val.numel(); ++i) {
                if (m_copy->v[i] <= 0.5) continue;
                const Real sig = 1.0 / (1.0 + std::exp(-logits->val.v[i]));
                logits->grad.v[i] += g * (sig - t_copy->v[i]);
            }
        };
    }
    return &out;
}

constexpr Real kLtrbEps = 1e-6;

/// -ln(IoU) regression loss over positive locations. Predicted and target
/// side distances share the anchor point, so the IoU has a closed form;
/// it equals decoding both boxes and intersecting them.
/// pred [N,4,H,W] (l,t,r,b), target same, mask [N,1,H,W].
inline nn::Var iou_loss(nn::Tape& tape, nn::Var pred, const Tensor& target, const Tensor& mask) {
    const auto& s = pred->val.shape;
    check(s.size() == 4 && s[1] == 4, "iou_loss: [N,4,H,W] required");
    check(target.shape == s, "iou_loss: target shape mismatch");
    check(mask.shape == std::vector<int>({s[0], 1, s[2], s[3]}), "iou_loss: mask shape mismatch");
    const int N = s[0], H = s[2], W = s[3];
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;

    std::int64_t np = 0;
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        if (mask.v[i] > 0.5) ++np;

    auto& out = tape.result({1}, {pred});
    if (np == 0) {
        out.val.v[0] = 0;
        return &out;
    }

    auto idx = [hw](int n, int c, std::int64_t i) {
        return (static_cast<std::int64_t>(n) * 4 + c) * hw + i;
    };
    Real acc = 0;
    for (int n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < hw; ++i) {
            if (mask.v[n * hw + i] <= 0.5) continue;
            Real p[4], t[4];
            for (int c = 0; c < 4; ++c) {
                p[c] = std::max(pred->val.v[idx(n, c, i)], kLtrbEps);
                t[c] = target.v[idx(n, c, i)];
                check(t[c] > 0, "iou_loss: target components must be positive on the mask");
            }
            const Real iw = std::min(p[0], t[0]) + std::min(p[2], t[2]);
            const Real ih = std::min(p[1], t[1]) + std::min(p[3], t[3]);
            const Real inter = iw * ih;
            const Real ap = (p[0] + p[2]) * (p[1] + p[3]);
            const Real ag = (t[0] + t[2]) * (t[1] + t[3]);
            const Real uni = ap + ag - inter;
            acc += std::log(uni) - std::log(std::max(inter, kLtrbEps));
        }
    out.val.v[0] = acc / static_cast<Real>(np);

    if (out.needs_grad) {
        auto t_copy = std::make_shared<Tensor>(target);
        auto m_copy = std::make_shared<Tensor>(mask);
        out.back = [pred, t_copy, m_copy, N, hw, idx, np](nn::Tape::Node& out) {
            const Real g = out.grad.v[0] / static_cast<Real>(np);
            for (int n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < hw; ++i) {
                    if (m_copy->v[n * hw + i] <= 0.5) continue;
                    Real p[4], t[4];
                    bool clamped[4];
                    for (int c = 0; c < 4; ++c) {
                        const Real raw = pred->val.v[idx(n, c, i)];
                        clamped[c] = raw < kLtrbEps;
                        p[c] = std::max(raw, kLtrbEps);
                        t[c] = t_copy->v[idx(n, c, i)];
                    }
                    const Real iw = std::min(p[0], t[0]) + std::min(p[2], t[2]);
                    const Real ih = std::min(p[1], t[1]) + std::min(p[3], t[3]);
                    const Real inter = std::max(iw * ih, kLtrbEps);
                    const Real ap = (p[0] + p[2]) * (p[1] + p[3]);
                    const Real ag = (t[0] + t[2]) * (t[1] + t[3]);
                    const Real uni = ap + ag - iw * ih;
                    // dL = dU/U - dI/I per component
                    for (int c = 0; c < 4; ++c) {
                        if (clamped[c]) continue;
                        const bool horizontal = (c == 0 || c == 2);
                        const Real dI = (p[c] < t[c]) ? (horizontal ? ih : iw) : 0.0;
                        const Real dAp = horizontal ? (p[1] + p[3]) : (p[0] + p[2]);
                        const Real dL = (dAp - dI) / uni - dI / inter;
                        pred->grad.v[idx(n, c, i)] += g * dL;
                    }
                }
        };
    }
    return &out;
}

/// RoI grouping for the embedding-space contrastive loss: one group per
/// training pair. anchor_row indexes the anchor tensor, rows index the
/// RoI-vector tensor.
struct RoiGroup {
    int anchor_row = 0;          // exemplar vector
    std::vector<int> rows;       // instance RoI vectors
    std::vector<int> labels;     // 1 positive / 0 hard negative, parallel to rows
};

/// Contrastive loss between anchor vectors [A, D, ...] and RoI vectors
/// [R, D, ...]: squared distance pull on positives, squared hinge push on
/// negatives, averaged per group and then across groups.
inline nn::Var contrastive_embeddings(nn::Tape& tape, nn::Var anchors, nn::Var vecs,
                                      const std::vector<RoiGroup>& groups, Real margin) {
    check(!groups.empty(), "contrastive_embeddings: no groups");
    const std::int64_t D = anchors->val.numel() / anchors->val.shape[0];
    check(D == vecs->val.numel() / vecs->val.shape[0],
          "contrastive_embeddings: dimension mismatch");
    const int A = anchors->val.shape[0];
    const int R = vecs->val.shape[0];

    auto& out = tape.result({1}, {anchors, vecs});
    Real acc = 0;
    for (const auto& grp : groups) {
        check(grp.anchor_row >= 0 && grp.anchor_row < A, "contrastive_embeddings: bad anchor row");
        check(grp.rows.size() == grp.labels.size() && !grp.rows.empty(),
              "contrastive_embeddings: rows/labels mismatch");
        const Real* a = anchors->val.data() + grp.anchor_row * D;
        Real gacc = 0;
        for (size_t k = 0; k < grp.rows.size(); ++k) {
            check(grp.rows[k] >= 0 && grp.rows[k] < R, "contrastive_embeddings: bad roi row");
            const Real* b = vecs->val.data() + grp.rows[k] * D;
            Real d2 = 0;
            for (std::int64_t j = 0; j < D; ++j) d2 += (b[j] - a[j]) * (b[j] - a[j]);
            const Real d = std::sqrt(d2);
            if (grp.labels[k] == 1) {
                gacc += d2;
            } else {
                const Real gap = std::max<Real>(0, margin - d);
                gacc += gap * gap;
            }
        }
        acc += gacc / static_cast<Real>(grp.rows.size());
    }
    out.val.v[0] = acc / static_cast<Real>(groups.size());

    if (out.needs_grad) {
        auto groups_copy = std::make_shared<std::vector<RoiGroup>>(groups);
        out.back = [anchors, vecs, groups_copy, margin, D](nn::Tape::Node& out) {
            const Real g0 = out.grad.v[0] / static_cast<Real>(groups_copy->size());
            for (const auto& grp : *groups_copy) {
                const Real gn = g0 / static_cast<Real>(grp.rows.size());
                const Real* a = anchors->val.data() + grp.anchor_row * D;
                Real* da = anchors->needs_grad ? anchors->grad.data() + grp.anchor_row * D
                                               : nullptr;
                for (size_t k = 0; k < grp.rows.size(); ++k) {
                    const Real* b = vecs->val.data() + grp.rows[k] * D;
                    Real* db = vecs->needs_grad ? vecs->grad.data() + grp.rows[k] * D : nullptr;
                    Real d2 = 0;
                    for (std::int64_t j = 0; j < D; ++j) d2 += (b[j] - a[j]) * (b[j] - a[j]);
                    const Real d = std::sqrt(std::max<Real>(d2, 1e-18));
                    Real coef = 0;
                    if (grp.labels[k] == 1) {
                        coef = gn * 2.0; // d/dv of d^2 = 2(v - a)
                    } else if (d < margin) {
                        coef = gn * (-2.0) * (margin - d) / d;
                    } else {
                        continue;
                    }
                    for (std::int64_t j = 0; j < D; ++j) {
                        const Real gj = coef * (b[j] - a[j]);
                        if (db) db[j] += gj;
                        if (da) da[j] -= gj;
                    }
                }
            }
        };
    }
    return &out;
}

} // namespace losses
} // namespace aftrack
