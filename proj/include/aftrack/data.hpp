#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "aftrack/image.hpp"

namespace aftrack::data {

/// Knobs of the synthetic scene generator. Distractors are same-class
/// objects that look like the target (hard negatives); clutter objects are
/// unrelated shapes (easy negatives).
struct SceneConfig {
    int frame_width = 256;
    int frame_height = 256;
    int length = 40;
    int distractors = 0;
    int clutter = 3;
    Real min_target = 26;
    Real max_target = 50;
    Real max_speed = 4.0;
};

namespace detail {

inline Real hash_noise(std::uint64_t seed, int x, int y) {
    std::uint64_t h = seed ^ (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ull) ^
                      (static_cast<std::uint64_t>(y + 7919) * 0xC2B2AE3D27D4EB4Full);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return static_cast<Real>(h >> 11) * 0x1.0p-53;
}

struct Look {
    int kind = 0; // 0 ellipse, 1 rectangle, 2 triangle
    std::array<Real, 3> color{0.5, 0.5, 0.5};
    std::array<Real, 3> color2{0.5, 0.5, 0.5};
    bool striped = false;
    Real stripe_period = 8;
};

// pixel-center membership test for a shape inscribed in `b`
inline bool covers(const Look& look, const Box& b, Real px, Real py) {
    if (px <= b.x0 || px >= b.x1 || py <= b.y0 || py >= b.y1) return false;
    const Real cx = (b.x0 + b.x1) * 0.5, cy = (b.y0 + b.y1) * 0.5;
    const Real a = (b.x1 - b.x0) * 0.5, h = (b.y1 - b.y0) * 0.5;
    switch (look.kind) {
        case 0: {
            const Real dx = (px - cx) / a, dy = (py - cy) / h;
            return dx * dx + dy * dy <= 1.0;
        }
        case 1:
            return true;
        default: {
            // isoceles triangle: apex up, base along the bottom edge
            const Real fy = (py - b.y0) / (2 * h);        // 0 top .. 1 bottom
            const Real half_width = a * fy;               // grows toward base
            return std::abs(px - cx) <= half_width;
        }
    }
}

struct Path {
    std::vector<Real> cx, cy, w, h;
};

inline Path simulate_path(const SceneConfig& cfg, Rng& rng, Real w0, Real h0) {
    Path p;
    p.cx.resize(cfg.length);
    p.cy.resize(cfg.length);
    p.w.resize(cfg.length);
    p.h.resize(cfg.length);
    const Real margin = 3;
    const Real amp = rng.uniform(0.0, 0.06);
    const Real period = rng.uniform(24, 60);
    const Real phase = rng.uniform(0, 6.28318);
    Real x = rng.uniform(w0 / 2 + margin, cfg.frame_width - w0 / 2 - margin);
    Real y = rng.uniform(h0 / 2 + margin, cfg.frame_height - h0 / 2 - margin);
    Real vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
    Real vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
    for (int i = 0; i < cfg.length; ++i) {
        const Real s = 1.0 + amp * std::sin(6.28318 * i / period + phase);
        p.w[i] = w0 * s;
        p.h[i] = h0 * s;
        const Real lo_x = p.w[i] / 2 + margin, hi_x = cfg.frame_width - p.w[i] / 2 - margin;
        const Real lo_y = p.h[i] / 2 + margin, hi_y = cfg.frame_height - p.h[i] / 2 - margin;
        x = std::min(std::max(x, lo_x), hi_x);
        y = std::min(std::max(y, lo_y), hi_y);
        p.cx[i] = x;
        p.cy[i] = y;
        vx += rng.normal() * 0.5;
        vy += rng.normal() * 0.5;
        vx = std::min(std::max(vx, -cfg.max_speed), cfg.max_speed);
        vy = std::min(std::max(vy, -cfg.max_speed), cfg.max_speed);
        if (x + vx < lo_x || x + vx > hi_x) vx = -vx;
        if (y + vy < lo_y || y + vy > hi_y) vy = -vy;
        x += vx;
        y += vy;
    }
    return p;
}

} // namespace detail

/// A deterministic synthetic sequence: one moving target, optional
/// same-class distractors, static clutter, textured background. Frames are
/// rendered on demand; (seed, frame index) fully determines every pixel.
class Sequence {
public:
    Sequence(const SceneConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
        Rng rng(seed ^ 0x5eedf00dull);
        for (int c = 0; c < 3; ++c) bg_base_[c] = rng.uniform(0.15, 0.40);
        for (auto& w : waves_)
            w = {rng.uniform(0.015, 0.05), rng.uniform(0.02, 0.09), rng.uniform(0, 6.28),
                 rng.uniform(0.0, 0.05)};

        target_.kind = rng.uniform_int(3);
        for (int c = 0; c < 3; ++c) target_.color[c] = rng.uniform(0.55, 1.0);
        // keep the target clearly brighter than the background
        target_.color[rng.uniform_int(3)] = rng.uniform(0.8, 1.0);
        target_.striped = rng.uniform() < 0.5;
        for (int c = 0; c < 3; ++c)
            target_.color2[c] = std::min<Real>(1.0, target_.color[c] * rng.uniform(0.55, 0.8));
        target_.stripe_period = rng.uniform(5, 11);

        const Real w0 = rng.uniform(cfg.min_target, cfg.max_target);
        const Real aspect = rng.uniform(0.75, 1.35);
        const Real h0 =
            std::min(std::max(w0 * aspect, cfg.min_target), cfg.max_target);
        target_path_ = detail::simulate_path(cfg_, rng, w0, h0);

        for (int d = 0; d < cfg.distractors; ++d) {
            detail::Look look = target_; // same class, near-identical look
            for (int c = 0; c < 3; ++c)
                look.color[c] =
                    std::min<Real>(1.0, std::max<Real>(0.3, look.color[c] + rng.uniform(-0.03, 0.03)));
            distractors_.push_back(look);
            distractor_paths_.push_back(orbit_path(rng, w0 * rng.uniform(0.85, 1.15),
                                                   h0 * rng.uniform(0.85, 1.15)));
        }

        for (int k = 0; k < cfg.clutter; ++k) {
            detail::Look look;
            look.kind = (target_.kind + 1 + rng.uniform_int(2)) % 3; // different class
            const Real v = rng.uniform(0.2, 0.5);
            for (int c = 0; c < 3; ++c) look.color[c] = v + rng.uniform(-0.08, 0.08);
            clutter_.push_back(look);
            const Real cw = rng.uniform(14, 40), ch = rng.uniform(14, 40);
            clutter_boxes_.push_back(
                Box::from_center(rng.uniform(cw / 2, cfg.frame_width - cw / 2),
                                 rng.uniform(ch / 2, cfg.frame_height - ch / 2), cw, ch));
        }

        annotations_.reserve(cfg.length);
        distractor_annotations_.assign(cfg.length, {});
        for (int i = 0; i < cfg.length; ++i) {
            annotations_.push_back(Box::from_center(target_path_.cx[i], target_path_.cy[i],
                                                    target_path_.w[i], target_path_.h[i]));
            for (const auto& p : distractor_paths_)
                distractor_annotations_[i].push_back(
                    Box::from_center(p.cx[i], p.cy[i], p.w[i], p.h[i]));
        }
    }

    int length() const { return cfg_.length; }
    const SceneConfig& config() const { return cfg_; }
    const std::vector<Box>& annotations() const { return annotations_; }
    const std::vector<std::vector<Box>>& distractor_annotations() const {
        return distractor_annotations_;
    }

    Image frame(int i) const {
        check(i >= 0 && i < cfg_.length, "Sequence::frame: index out of range");
        Image img(cfg_.frame_width, cfg_.frame_height);
        for (int y = 0; y < cfg_.frame_height; ++y)
            for (int x = 0; x < cfg_.frame_width; ++x) {
                const Real n = 0.04 * (detail::hash_noise(seed_, x, y) - 0.5);
                for (int c = 0; c < 3; ++c) {
                    const auto& w = waves_[c];
                    const Real tex = w[0] * std::cos(w[1] * (x + 2.0 * c) + w[2]) +
                                     w[3] * std::cos(w[1] * 0.6 * y - w[2]);
                    img.at(c, y, x) = std::min<Real>(1, std::max<Real>(0, bg_base_[c] + tex + n));
                }
            }
        for (size_t k = 0; k < clutter_.size(); ++k)
            paint(img, clutter_[k], clutter_boxes_[k]);
        for (size_t d = 0; d < distractors_.size(); ++d)
            paint(img, distractors_[d], distractor_annotations_[i][d]);
        paint(img, target_, annotations_[i]); // target drawn last, never occluded
        return img;
    }

private:
    // Distractors shadow the target: they drift around it on a slowly
    // breathing orbit, repeatedly passing close by and crossing it. This is
    // what makes them hard negatives rather than background clutter.
    detail::Path orbit_path(Rng& rng, Real w0, Real h0) {
        detail::Path p;
        p.cx.resize(cfg_.length);
        p.cy.resize(cfg_.length);
        p.w.resize(cfg_.length);
        p.h.resize(cfg_.length);
        const Real r_mid = rng.uniform(0.9, 1.6) * std::max(w0, h0);
        const Real r_amp = rng.uniform(0.5, 0.9) * r_mid;
        const Real r_period = rng.uniform(16, 34);
        const Real r_phase = rng.uniform(0, 6.28318);
        Real theta = rng.uniform(0, 6.28318);
        const Real omega = rng.uniform(-0.25, 0.25);
        const Real s_amp = rng.uniform(0.0, 0.06);
        const Real s_phase = rng.uniform(0, 6.28318);
        for (int i = 0; i < cfg_.length; ++i) {
            const Real s = 1.0 + s_amp * std::sin(6.28318 * i / 40.0 + s_phase);
            p.w[i] = w0 * s;
            p.h[i] = h0 * s;
            const Real radius =
                std::max<Real>(0.35 * std::max(w0, h0),
                               r_mid + r_amp * std::cos(6.28318 * i / r_period + r_phase));
            Real x = target_path_.cx[i] + radius * std::cos(theta);
            Real y = target_path_.cy[i] + radius * std::sin(theta);
            theta += omega;
            x = std::min(std::max(x, p.w[i] / 2 + 2), cfg_.frame_width - p.w[i] / 2 - 2);
            y = std::min(std::max(y, p.h[i] / 2 + 2), cfg_.frame_height - p.h[i] / 2 - 2);
            p.cx[i] = x;
            p.cy[i] = y;
        }
        return p;
    }

    void paint(Image& img, const detail::Look& look, const Box& b) const {
        const int x0 = std::max(0, static_cast<int>(std::floor(b.x0)));
        const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(b.x1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(b.y0)));
        const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(b.y1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (!detail::covers(look, b, x + 0.5, y + 0.5)) continue;
                const bool alt =
                    look.striped &&
                    (static_cast<int>((x + y - b.x0 - b.y0) / look.stripe_period) % 2 == 1);
                const auto& col = alt ? look.color2 : look.color;
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
            }
    }

    SceneConfig cfg_;
    std::uint64_t seed_;
    std::array<Real, 3> bg_base_{};
    std::array<std::array<Real, 4>, 3> waves_{};
    detail::Look target_;
    detail::Path target_path_;
    std::vector<detail::Look> distractors_;
    std::vector<detail::Path> distractor_paths_;
    std::vector<detail::Look> clutter_;
    std::vector<Box> clutter_boxes_;
    std::vector<Box> annotations_;
    std::vector<std::vector<Box>> distractor_annotations_;
};

inline Sequence generate_sequence(const SceneConfig& cfg, std::uint64_t seed) {
    return Sequence(cfg, seed);
}

/// One exemplar/instance training pair; boxes in crop coordinates.
struct TrainingPair {
    Image exemplar;
    Image instance;
    Box gt;          // target in instance coordinates
    Box exemplar_gt; // target in exemplar coordinates (embedding branch input)
};

struct PairConfig {
    int exemplar_size = 127;
    int instance_size = 255;
    Real shift = 64;        // max |target offset| from the instance center, px
    Real scale_jitter = 0.05;
    Real color_jitter = 0.10;
    int max_interval = 100; // max |i - j|
};

/// Crops frame i into the exemplar and frame j into the instance, with the
/// target randomly translated up to +-shift pixels off the instance center,
/// plus mild scale and color augmentation.
inline TrainingPair make_training_pair(const Sequence& seq, int i, int j, const PairConfig& cfg,
                                       Rng& rng) {
    check(i >= 0 && i < seq.length() && j >= 0 && j < seq.length(),
          "make_training_pair: frame index out of range");
    check(std::abs(i - j) < cfg.max_interval, "make_training_pair: frames too far apart");

    TrainingPair out;
    const Box gi = seq.annotations()[i];
    const Box gj = seq.annotations()[j];

    const Real jitter_z = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter);
    const Real side_z = scale_size(gi.width(), gi.height()) * jitter_z;
    const Image frame_i = seq.frame(i);
    out.exemplar = subwindow(frame_i, gi.center().x, gi.center().y, side_z, cfg.exemplar_size);
    out.exemplar_gt = crop_transform(gi, gi.center().x, gi.center().y, side_z, cfg.exemplar_size);

    const Real jitter_x = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter);
    const Real side_x = scale_size(gj.width(), gj.height()) *
                        (static_cast<Real>(cfg.instance_size) / cfg.exemplar_size) * jitter_x;
    const Real dx = rng.uniform(-cfg.shift, cfg.shift); // offset in instance px
    const Real dy = rng.uniform(-cfg.shift, cfg.shift);
    const Real to_frame = side_x / cfg.instance_size;
    const Real ccx = gj.center().x - dx * to_frame;
    const Real ccy = gj.center().y - dy * to_frame;
    const Image frame_j = seq.frame(j);
    out.instance = subwindow(frame_j, ccx, ccy, side_x, cfg.instance_size);
    out.gt = crop_transform(gj, ccx, ccy, side_x, cfg.instance_size);

    for (Image* img : {&out.exemplar, &out.instance}) {
        for (int c = 0; c < 3; ++c) {
            const Real gain = 1.0 + rng.uniform(-cfg.color_jitter, cfg.color_jitter);
            const std::int64_t hw = static_cast<std::int64_t>(img->width) * img->height;
            for (std::int64_t k = 0; k < hw; ++k) {
                Real& v = img->v[c * hw + k];
                v = std::min<Real>(1, std::max<Real>(0, v * gain));
            }
        }
    }
    return out;
}

// ---- GOT-10k style sequence directories -------------------------------------

/// Writes DIR/00000001.png ... plus DIR/groundtruth.txt ("x,y,w,h" per line).
inline void write_sequence(const Sequence& seq, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream gt(dir + "/groundtruth.txt");
    check(gt.good(), "write_sequence: cannot open groundtruth.txt in " + dir);
    for (int i = 0; i < seq.length(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%08d.png", i + 1);
        save_image(seq.frame(i), dir + "/" + name);
        const Box& b = seq.annotations()[i];
        char line[128];
        std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%.3f\n", b.x0, b.y0, b.width(),
                      b.height());
        gt << line;
    }
}

/// A sequence read back from disk; frames load lazily.
struct DiskSequence {
    std::vector<std::string> frame_paths;
    std::vector<Box> boxes;

    int length() const { return static_cast<int>(frame_paths.size()); }
    Image frame(int i) const { return load_image(frame_paths[static_cast<size_t>(i)]); }
};

inline DiskSequence read_sequence_dir(const std::string& dir) {
    DiskSequence out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm")
            out.frame_paths.push_back(entry.path().string());
    }
    std::sort(out.frame_paths.begin(), out.frame_paths.end());
    check(!out.frame_paths.empty(), "read_sequence_dir: no frames in " + dir);

    std::ifstream gt(dir + "/groundtruth.txt");
    check(gt.good(), "read_sequence_dir: missing groundtruth.txt in " + dir);
    std::string line;
    while (std::getline(gt, line)) {
        if (line.empty()) continue;
        Real x = 0, y = 0, w = 0, h = 0;
        for (auto& ch : line)
            if (ch == ',' || ch == '\t') ch = ' ';
        check(std::sscanf(line.c_str(), "%lf %lf %lf %lf", &x, &y, &w, &h) == 4,
              "read_sequence_dir: malformed groundtruth line '" + line + "'");
        out.boxes.push_back({x, y, x + w, y + h});
    }
    check(out.boxes.size() == out.frame_paths.size(),
          "read_sequence_dir: annotation / frame count mismatch in " + dir);
    return out;
}

} // namespace aftrack::data
