#pragma once

#include "aftrack/data.hpp"
#include "aftrack/model.hpp"

namespace aftrack {

/// Post-processing knobs of the online loop.
struct TrackParams {
    Real penalty_k = 0.04;
    Real window_influence = 0.40;
    Real size_lr = 0.30;
    bool literal_penalty = false; // un-negated penalty exponent, for fidelity runs
};

/// Per-sequence tracker state carried across frames.
struct TrackerState {
    Point center;
    Real width = 0;
    Real height = 0;
    Real prev_ratio = 1;    // r' of the penalty
    Real prev_scale = 1;    // s' of the penalty, frame pixels
    Real exemplar_side = 0; // context-padded crop side used at init
    TrackParams params;
    Model::FeaturePyramid exemplar_features; // cached once, never refreshed
};

/// Size/aspect-change penalty. The default form equals 1 when nothing
/// changed and decays as either factor grows; the literal form
/// exp(+k * max * max) is kept behind a flag for comparison runs.
inline Real scale_penalty(Real cand_ratio, Real cand_scale, const TrackerState& state) {
    check(cand_ratio > 0 && cand_scale > 0, "scale_penalty: positive inputs required");
    const Real r_change = std::max(cand_ratio / state.prev_ratio, state.prev_ratio / cand_ratio);
    const Real s_change = std::max(cand_scale / state.prev_scale, state.prev_scale / cand_scale);
    if (state.params.literal_penalty)
        return std::exp(state.params.penalty_k * r_change * s_change);
    return std::exp(-state.params.penalty_k * (r_change * s_change - 1.0));
}

/// Hann-profile window over grid cells, peaked at (cx, cy) in grid
/// coordinates and reaching zero at radius (n-1)/2.
inline std::vector<Real> cosine_window(int width, int height, Real cx, Real cy) {
    const auto axis = [](int n, Real c) {
        std::vector<Real> h(static_cast<size_t>(n));
        const Real radius = (n - 1) * 0.5;
        for (int i = 0; i < n; ++i) {
            const Real d = std::abs(i - c) / radius;
            h[static_cast<size_t>(i)] =
                d >= 1.0 ? 0.0 : 0.5 + 0.5 * std::cos(3.14159265358979323846 * d);
        }
        return h;
    };
    const std::vector<Real> hx = axis(width, cx);
    const std::vector<Real> hy = axis(height, cy);
    std::vector<Real> out(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out[static_cast<size_t>(y) * width + x] = hy[y] * hx[x];
    return out;
}

inline int argmax(const std::vector<Real>& v) {
    check(!v.empty(), "argmax: empty input");
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
    return best;
}

/// Online tracking loop around a trained model: crop, forward, fuse,
/// centerness/penalty/window post-processing, state update.
class Tracker {
public:
    explicit Tracker(Model& model, TrackParams params = {}) : model_(model), params_(params) {
        const GridSpec grid = model.config().grid();
        // grid coordinate of a zero-displacement candidate (the crop center)
        window_cx_ = (model.config().instance_size / 2.0 - grid.stride / 2.0) / grid.stride;
        window_cy_ = window_cx_;
        window_ = cosine_window(grid.width, grid.height, window_cx_, window_cy_);
    }

    TrackerState init(const Image& frame, const Box& gt) const {
        check(gt.valid(), "Tracker::init: invalid gt box");
        check(gt.x0 >= 0 && gt.y0 >= 0 && gt.x1 <= frame.width && gt.y1 <= frame.height,
              "Tracker::init: gt outside frame");
        TrackerState state;
        state.center = gt.center();
        state.width = gt.width();
        state.height = gt.height();
        state.prev_ratio = state.width / state.height;
        state.prev_scale = scale_size(state.width, state.height);
        state.exemplar_side = state.prev_scale; // context-padded square crop
        state.params = params_;
        const Image exemplar = subwindow(frame, state.center.x, state.center.y,
                                         state.exemplar_side, model_.config().exemplar_size);
        state.exemplar_features = model_.extract_features(to_tensor(exemplar));
        return state;
    }

    struct StepResult {
        Box box;                  // frame coordinates
        TrackerState state;       // updated
        std::vector<Real> final_score; // score*cen*penalty, pre-window, grid order
        std::vector<Real> blended;     // after window mixing
        Real best_score = 0;
    };

    /// One tracking step; always emits a box. Deterministic for a given
    /// (state, frame).
    StepResult step(const TrackerState& state, const Image& frame) const {
        const ModelConfig& cfg = model_.config();
        const GridSpec grid = cfg.grid();
        const std::int64_t hw = static_cast<std::int64_t>(grid.width) * grid.height;

        const Real s_z = scale_size(state.width, state.height);
        const Real crop_side = s_z * static_cast<Real>(cfg.instance_size) / cfg.exemplar_size;
        const Image instance =
            subwindow(frame, state.center.x, state.center.y, crop_side, cfg.instance_size);
        const auto result = model_.infer_cached(state.exemplar_features, to_tensor(instance));

        const Real to_frame = crop_side / cfg.instance_size;
        StepResult out;
        out.final_score.resize(static_cast<size_t>(hw));
        out.blended.resize(static_cast<size_t>(hw));

        const Real* s0 = result.fused.score.data();        // background channel
        const Real* s1 = result.fused.score.data() + hw;   // foreground channel
        const Real* cen = result.fused.cen.data();
        const Real* reg = result.fused.reg.data();
        std::vector<Real> cand_w(static_cast<size_t>(hw)), cand_h(static_cast<size_t>(hw));
        for (std::int64_t i = 0; i < hw; ++i) {
            const Real fg = 1.0 / (1.0 + std::exp(s0[i] - s1[i])); // softmax over 2 classes
            const Real quality = 1.0 / (1.0 + std::exp(-cen[i]));
            const Real w_i = reg[i] + reg[2 * hw + i];
            const Real h_i = reg[hw + i] + reg[3 * hw + i];
            cand_w[static_cast<size_t>(i)] = w_i;
            cand_h[static_cast<size_t>(i)] = h_i;
            const Real pen =
                scale_penalty(w_i / h_i, scale_size(w_i * to_frame, h_i * to_frame), state);
            out.final_score[static_cast<size_t>(i)] = fg * quality * pen;
            out.blended[static_cast<size_t>(i)] =
                (1.0 - state.params.window_influence) * out.final_score[static_cast<size_t>(i)] +
                state.params.window_influence * window_[static_cast<size_t>(i)];
        }

        const int best = argmax(out.blended);
        const int gx = best % grid.width;
        const int gy = best / grid.width;
        const Point anchor = grid_to_image(gx, gy, grid);
        const LTRB v{reg[best], reg[hw + best], reg[2 * hw + best], reg[3 * hw + best]};
        const Box inst_box = decode_box(anchor, v);
        out.best_score = out.final_score[static_cast<size_t>(best)];

        // map the selected box back to frame coordinates
        const Real half = cfg.instance_size / 2.0;
        const Point inst_center = inst_box.center();
        Point new_center{state.center.x + (inst_center.x - half) * to_frame,
                         state.center.y + (inst_center.y - half) * to_frame};
        new_center.x = std::min<Real>(std::max<Real>(new_center.x, 0), frame.width - 1);
        new_center.y = std::min<Real>(std::max<Real>(new_center.y, 0), frame.height - 1);

        // smoothed size update, gated by penalty and confidence
        const Real pen_best =
            scale_penalty(cand_w[static_cast<size_t>(best)] / cand_h[static_cast<size_t>(best)],
                          scale_size(cand_w[static_cast<size_t>(best)] * to_frame,
                                     cand_h[static_cast<size_t>(best)] * to_frame),
                          state);
        Real lr = state.params.size_lr * pen_best * out.best_score;
        lr = std::min<Real>(std::max<Real>(lr, 0), 1);
        const Real max_dim = static_cast<Real>(std::max(frame.width, frame.height));
        auto clamp_size = [&](Real v2) { return std::min(std::max<Real>(v2, 4.0), max_dim); };
        const Real new_w =
            clamp_size((1 - lr) * state.width + lr * cand_w[static_cast<size_t>(best)] * to_frame);
        const Real new_h =
            clamp_size((1 - lr) * state.height + lr * cand_h[static_cast<size_t>(best)] * to_frame);

        out.state = state;
        out.state.center = new_center;
        out.state.width = new_w;
        out.state.height = new_h;
        out.state.prev_ratio = new_w / new_h;
        out.state.prev_scale = scale_size(new_w, new_h);
        out.box = Box::from_center(new_center.x, new_center.y, new_w, new_h);
        return out;
    }

    /// Grid cell holding the window peak.
    std::pair<int, int> window_center_cell() const {
        return {static_cast<int>(std::lround(window_cx_)), static_cast<int>(std::lround(window_cy_))};
    }

    const std::vector<Real>& window() const { return window_; }

private:
    Model& model_;
    TrackParams params_;
    Real window_cx_ = 0;
    Real window_cy_ = 0;
    std::vector<Real> window_;
};

} // namespace aftrack
