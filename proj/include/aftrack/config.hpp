#pragma once

#include <fstream>

#include <json.hpp>

#include "aftrack/harness.hpp"

namespace aftrack {

/// Tool-level configuration: training run + tracking post-processing + the
/// held-out evaluation set.
struct AppConfig {
    harness::TrainConfig train;
    TrackParams track;
    int eval_sequences = 20;
    std::uint64_t eval_seed = 9000;
    int eval_distractors = -1; // -1 keeps the training distractor density
    int eval_length = -1;      // -1 keeps the training sequence length

    data::SceneConfig eval_scene() const {
        data::SceneConfig scene = train.scene;
        if (eval_distractors >= 0) scene.distractors = eval_distractors;
        if (eval_length > 0) scene.length = eval_length;
        return scene;
    }
};

namespace detail {
template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
} // namespace detail

inline AppConfig parse_config(const nlohmann::json& j) {
    AppConfig cfg;
    using detail::get_if;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        ModelConfig& mc = cfg.train.model;
        get_if(m, "exemplar_size", mc.exemplar_size);
        get_if(m, "instance_size", mc.instance_size);
        get_if(m, "channels", mc.channels);
        get_if(m, "tower_channels", mc.tower_channels);
        get_if(m, "embed_dim", mc.embed_dim);
        get_if(m, "embed_hidden", mc.embed_hidden);
        get_if(m, "stem1", mc.stem1);
        get_if(m, "stem2", mc.stem2);
        get_if(m, "block_width", mc.block_width);
        get_if(m, "norm_groups", mc.norm_groups);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        harness::TrainConfig& tc = cfg.train;
        get_if(t, "steps", tc.steps);
        get_if(t, "batch_size", tc.batch_size);
        get_if(t, "base_lr", tc.base_lr);
        get_if(t, "warmup_lr", tc.warmup_lr);
        get_if(t, "final_lr", tc.final_lr);
        get_if(t, "warmup_frac", tc.warmup_frac);
        get_if(t, "freeze_frac", tc.freeze_frac);
        get_if(t, "momentum", tc.momentum);
        get_if(t, "weight_decay", tc.weight_decay);
        get_if(t, "train_sequences", tc.train_sequences);
        get_if(t, "max_interval", tc.max_interval);
        get_if(t, "seed", tc.seed);
        get_if(t, "log_every", tc.log_every);
        get_if(t, "checkpoint", tc.checkpoint);
        get_if(t, "log", tc.log_path);
        get_if(t, "lambda1", tc.weights.score);
        get_if(t, "lambda2", tc.weights.centerness);
        get_if(t, "lambda3", tc.weights.regression);
        get_if(t, "lambda4", tc.weights.contrastive);
    }
    if (j.contains("hne")) {
        const auto& h = j.at("hne");
        hne::HneConfig& hc = cfg.train.hne;
        get_if(h, "enabled", hc.enabled);
        get_if(h, "k", hc.k);
        get_if(h, "T_h", hc.t_high);
        get_if(h, "T_l", hc.t_low);
        get_if(h, "nms_threshold", hc.nms_threshold);
        get_if(h, "margin", hc.margin);
        get_if(h, "embed_dim", hc.embed_dim);
        get_if(h, "top_m", hc.top_m);
        cfg.train.model.embed_dim = hc.embed_dim;
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        data::SceneConfig& sc = cfg.train.scene;
        get_if(d, "frame_width", sc.frame_width);
        get_if(d, "frame_height", sc.frame_height);
        get_if(d, "length", sc.length);
        get_if(d, "distractors", sc.distractors);
        get_if(d, "clutter", sc.clutter);
        get_if(d, "min_target", sc.min_target);
        get_if(d, "max_target", sc.max_target);
        get_if(d, "max_speed", sc.max_speed);
    }
    if (j.contains("track")) {
        const auto& t = j.at("track");
        get_if(t, "penalty_k", cfg.track.penalty_k);
        get_if(t, "window_influence", cfg.track.window_influence);
        get_if(t, "size_lr", cfg.track.size_lr);
        get_if(t, "literal_penalty", cfg.track.literal_penalty);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        get_if(e, "sequences", cfg.eval_sequences);
        get_if(e, "seed", cfg.eval_seed);
        get_if(e, "distractors", cfg.eval_distractors);
        get_if(e, "length", cfg.eval_length);
    }
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_config: cannot open " + path);
    nlohmann::json j;
    f >> j;
    return parse_config(j);
}

} // namespace aftrack
