#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include "aftrack/hne.hpp"
#include "aftrack/metrics.hpp"
#include "aftrack/tracker.hpp"

namespace aftrack::harness {

/// Everything one training run needs. Defaults follow the desk-scale
/// schedule: flat warmup for the first quarter of the run, geometric decay
/// to final_lr afterwards, backbone frozen for the first half.
struct TrainConfig {
    ModelConfig model;
    hne::HneConfig hne;
    data::SceneConfig scene;
    LossWeights weights;

    int steps = 2000;
    int batch_size = 8;
    Real base_lr = 5e-3;
    Real warmup_lr = 1e-3;
    Real final_lr = 5e-4;
    Real warmup_frac = 0.25;
    Real freeze_frac = 0.5;
    Real momentum = 0.9;
    Real weight_decay = 1e-4;
    int train_sequences = 64;
    int max_interval = 100;
    std::uint64_t seed = 1;
    int log_every = 25;
    std::string checkpoint = "checkpoint.bin";
    std::string log_path; // optional per-step CSV
    bool quiet = false;

    data::PairConfig pair_config() const {
        data::PairConfig pc;
        pc.exemplar_size = model.exemplar_size;
        pc.instance_size = model.instance_size;
        pc.shift = 64.0 * model.instance_size / 255.0; // scales with resolution
        pc.max_interval = max_interval;
        return pc;
    }
};

struct StepLog {
    int step = 0;
    Real score = 0, cen = 0, reg = 0, contra = 0, total = 0, lr = 0;
};

struct TrainResult {
    std::unique_ptr<Model> model;
    std::vector<StepLog> log;
    int skipped_pairs = 0;
};

inline Real learning_rate(const TrainConfig& cfg, int step) {
    const int warm_end = static_cast<int>(cfg.warmup_frac * cfg.steps);
    if (step < warm_end) return cfg.warmup_lr;
    const int span = std::max(1, cfg.steps - warm_end);
    const Real progress = static_cast<Real>(step - warm_end) / static_cast<Real>(span);
    return cfg.base_lr * std::pow(cfg.final_lr / cfg.base_lr, progress);
}

/// SGD with momentum and L2 weight decay over a model's parameter store.
class Sgd {
public:
    Sgd(Model& model, Real momentum, Real weight_decay)
        : model_(model), momentum_(momentum), weight_decay_(weight_decay) {
        for (nn::Parameter* p : model.parameters()) velocity_.emplace_back(p->value.shape);
    }

    void step(Real lr, bool backbone_frozen) {
        const auto params = model_.parameters();
        for (size_t i = 0; i < params.size(); ++i) {
            nn::Parameter* p = params[i];
            if (backbone_frozen && p->backbone) continue;
            Tensor& v = velocity_[i];
            for (std::int64_t k = 0; k < p->value.numel(); ++k) {
                const Real g = p->grad.v[k] + weight_decay_ * p->value.v[k];
                v.v[k] = momentum_ * v.v[k] + g;
                p->value.v[k] -= lr * v.v[k];
            }
        }
    }

    std::vector<Tensor>& velocity() { return velocity_; }

private:
    Model& model_;
    Real momentum_;
    Real weight_decay_;
    std::vector<Tensor> velocity_;
};

struct Batch {
    Tensor z, x;           // images
    Tensor cls, cen, reg, mask;
    std::vector<Box> gts;
    std::vector<Box> exemplar_gts;
    int skipped = 0;
};

/// Samples one batch of training pairs with per-pixel targets; pairs whose
/// gt catches no grid point are redrawn.
inline Batch sample_batch(const std::vector<data::Sequence>& sequences, const TrainConfig& cfg,
                          Rng& rng) {
    const ModelConfig& mc = cfg.model;
    const GridSpec grid = mc.grid();
    const int H = grid.height, W = grid.width;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const int n = cfg.batch_size;
    const data::PairConfig pc = cfg.pair_config();

    Batch b;
    b.z = Tensor({n, 3, mc.exemplar_size, mc.exemplar_size});
    b.x = Tensor({n, 3, mc.instance_size, mc.instance_size});
    b.cls = Tensor({n, 1, H, W});
    b.cen = Tensor({n, 1, H, W});
    b.reg = Tensor({n, 4, H, W});
    b.mask = Tensor({n, 1, H, W});

    for (int i = 0; i < n; ++i) {
        for (int attempt = 0;; ++attempt) {
            check(attempt < 50, "sample_batch: could not draw a pair with positive labels");
            const auto& seq = sequences[static_cast<size_t>(rng.uniform_int(
                static_cast<int>(sequences.size())))];
            const int fi = rng.uniform_int(seq.length());
            const int max_step = std::min(seq.length() - 1, pc.max_interval - 1);
            int fj = fi + (rng.uniform_int(2 * max_step + 1) - max_step);
            fj = std::min(std::max(fj, 0), seq.length() - 1);
            const data::TrainingPair pair = data::make_training_pair(seq, fi, fj, pc, rng);
            const LabelMaps maps = assign_labels(pair.gt, grid);
            if (!maps.has_positives()) {
                ++b.skipped;
                continue;
            }
            std::copy(pair.exemplar.v.begin(), pair.exemplar.v.end(),
                      b.z.v.begin() + static_cast<std::int64_t>(i) * 3 * mc.exemplar_size *
                                          mc.exemplar_size);
            std::copy(pair.instance.v.begin(), pair.instance.v.end(),
                      b.x.v.begin() + static_cast<std::int64_t>(i) * 3 * mc.instance_size *
                                          mc.instance_size);
            // network inputs are zero-centered
            for (std::int64_t k = 0; k < 3LL * mc.exemplar_size * mc.exemplar_size; ++k)
                b.z.v[static_cast<std::int64_t>(i) * 3 * mc.exemplar_size * mc.exemplar_size + k] -=
                    0.5;
            for (std::int64_t k = 0; k < 3LL * mc.instance_size * mc.instance_size; ++k)
                b.x.v[static_cast<std::int64_t>(i) * 3 * mc.instance_size * mc.instance_size + k] -=
                    0.5;
            for (std::int64_t k = 0; k < hw; ++k) {
                b.cls.v[i * hw + k] = maps.cls[k];
                b.mask.v[i * hw + k] = maps.cls[k];
                b.cen.v[i * hw + k] = maps.cen[k];
            }
            for (std::int64_t k = 0; k < 4 * hw; ++k)
                b.reg.v[i * 4 * hw + k] = std::max(maps.reg[k], 1e-3);
            b.gts.push_back(pair.gt);
            b.exemplar_gts.push_back(pair.exemplar_gt);
            break;
        }
    }
    return b;
}

/// Full offline training: SGD with the two-phase schedule, all four loss
/// components logged per step. Deterministic for a given config.
inline TrainResult train(const TrainConfig& cfg) {
    cfg.model.validate();
    TrainResult result;
    result.model = std::make_unique<Model>(cfg.model, cfg.seed);
    Model& model = *result.model;
    Sgd opt(model, cfg.momentum, cfg.weight_decay);

    Rng master(cfg.seed);
    Rng data_rng = master.fork(1);
    Rng hne_rng = master.fork(2);

    std::vector<data::Sequence> sequences;
    sequences.reserve(static_cast<size_t>(cfg.train_sequences));
    for (int i = 0; i < cfg.train_sequences; ++i)
        sequences.emplace_back(cfg.scene, cfg.seed * 1000003ull + static_cast<std::uint64_t>(i));

    std::FILE* log_file = nullptr;
    if (!cfg.log_path.empty()) {
        log_file = std::fopen(cfg.log_path.c_str(), "w");
        check(log_file != nullptr, "train: cannot open log file " + cfg.log_path);
        std::fprintf(log_file, "step,score,centerness,regression,contrastive,total,lr\n");
    }

    const bool use_hne = cfg.hne.enabled && cfg.weights.contrastive != 0.0;
    const int freeze_until = static_cast<int>(cfg.freeze_frac * cfg.steps);

    for (int step = 0; step < cfg.steps; ++step) {
        Batch batch = sample_batch(sequences, cfg, data_rng);
        result.skipped_pairs += batch.skipped;

        model.zero_grad();
        nn::Tape tape;
        auto fw = model.forward_pair(tape, batch.z, batch.x);
        nn::Var l_sco = losses::focal_loss(tape, fw.fused.score, batch.cls);
        nn::Var l_cen = losses::centerness_bce_logits(tape, fw.fused.cen, batch.cen, batch.mask);
        nn::Var l_reg = losses::iou_loss(tape, fw.fused.reg, batch.reg, batch.mask);

        StepLog log;
        log.step = step;
        log.score = l_sco->val.v[0];
        log.cen = l_cen->val.v[0];
        log.reg = l_reg->val.v[0];

        nn::Var total = nullptr;
        if (use_hne) {
            nn::Var l_con =
                hne::hne_loss(tape, model, fw, batch.gts, batch.exemplar_gts, cfg.hne, hne_rng);
            log.contra = l_con->val.v[0];
            total = tape.linear_combination(
                {l_sco, l_cen, l_reg, l_con},
                {cfg.weights.score, cfg.weights.centerness, cfg.weights.regression,
                 cfg.weights.contrastive});
        } else {
            log.contra = 0.0;
            total = tape.linear_combination(
                {l_sco, l_cen, l_reg},
                {cfg.weights.score, cfg.weights.centerness, cfg.weights.regression});
        }
        log.total = total->val.v[0];
        log.lr = learning_rate(cfg, step);

        if (!std::isfinite(log.total)) {
            if (log_file) std::fclose(log_file);
            throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                     std::to_string(step) + " [score=" + std::to_string(log.score) +
                                     " cen=" + std::to_string(log.cen) +
                                     " reg=" + std::to_string(log.reg) +
                                     " contra=" + std::to_string(log.contra) + "]");
        }

        tape.backward(total);
        opt.step(log.lr, step < freeze_until);
        result.log.push_back(log);

        if (log_file)
            std::fprintf(log_file, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g\n", log.step, log.score,
                         log.cen, log.reg, log.contra, log.total, log.lr);
        if (!cfg.quiet && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
            std::printf("step %5d  lr %.4g  score %.4f  cen %.4f  reg %.4f  contra %.4f  total %.4f\n",
                        step, log.lr, log.score, log.cen, log.reg, log.contra, log.total);
    }

    if (log_file) std::fclose(log_file);
    if (!cfg.checkpoint.empty())
        model.save(cfg.checkpoint, cfg.steps, cfg.seed, &opt.velocity());
    return result;
}

// ---- evaluation --------------------------------------------------------------

/// Runs the tracker over one sequence-like object (length / frame / boxes)
/// and appends the per-frame IoU trace. Frame 0 initializes, frames 1..N-1
/// are tracked.
template <typename Seq>
inline void evaluate_sequence(Model& model, const Seq& seq, const std::vector<Box>& gt_boxes,
                              const TrackParams& params, EvalReport& report) {
    check(seq.length() >= 2, "evaluate: sequence needs at least two frames");
    Tracker tracker(model, params);
    TrackerState state = tracker.init(seq.frame(0), gt_boxes[0]);
    std::vector<Real> trace;
    trace.reserve(static_cast<size_t>(seq.length() - 1));
    for (int i = 1; i < seq.length(); ++i) {
        const auto step = tracker.step(state, seq.frame(i));
        state = step.state;
        trace.push_back(iou(step.box, gt_boxes[static_cast<size_t>(i)]));
        const Point pc = step.box.center();
        const Point gc = gt_boxes[static_cast<size_t>(i)].center();
        report.center_errors.push_back(std::hypot(pc.x - gc.x, pc.y - gc.y));
    }
    report.iou_traces.push_back(std::move(trace));
}

inline EvalReport evaluate(Model& model, const std::vector<data::Sequence>& sequences,
                           const TrackParams& params = {}) {
    EvalReport report;
    for (const auto& seq : sequences)
        evaluate_sequence(model, seq, seq.annotations(), params, report);
    report.finalize();
    return report;
}

inline EvalReport evaluate_disk(Model& model, const std::vector<data::DiskSequence>& sequences,
                                const TrackParams& params = {}) {
    EvalReport report;
    for (const auto& seq : sequences) evaluate_sequence(model, seq, seq.boxes, params, report);
    report.finalize();
    return report;
}

/// Held-out synthetic test set with seeds disjoint from any training seed.
inline std::vector<data::Sequence> make_eval_set(const data::SceneConfig& scene, int count,
                                                 std::uint64_t seed) {
    std::vector<data::Sequence> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        out.emplace_back(scene, seed + 7919ull * static_cast<std::uint64_t>(i));
    return out;
}

// ---- ablation ----------------------------------------------------------------

/// Applies one "key=value" override onto a config. Keys cover the flags the
/// ablation studies sweep.
inline void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto as_real = [&] { return std::stod(value); };
    const auto as_int = [&] { return std::stoi(value); };
    if (key == "hne.enabled")
        cfg.hne.enabled = (value == "true" || value == "1");
    else if (key == "hne.k")
        cfg.hne.k = as_int();
    else if (key == "hne.T_h")
        cfg.hne.t_high = as_real();
    else if (key == "hne.T_l")
        cfg.hne.t_low = as_real();
    else if (key == "hne.nms_threshold")
        cfg.hne.nms_threshold = as_real();
    else if (key == "hne.margin")
        cfg.hne.margin = as_real();
    else if (key == "train.lambda4")
        cfg.weights.contrastive = as_real();
    else if (key == "train.steps")
        cfg.steps = as_int();
    else if (key == "train.seed")
        cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "data.distractors")
        cfg.scene.distractors = as_int();
    else
        throw std::invalid_argument("apply_override: unknown key " + key);
}

struct AblationRow {
    std::string label;
    Real ao = 0;
    Real sr050 = 0;
    Real sr075 = 0;
    std::vector<Real> per_seed_ao;
};

/// Trains one variant per value of `key`, each over the shared seed list,
/// and evaluates every run on the same held-out set. Rows report the mean
/// over seeds.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const std::string& key,
                                       const std::vector<std::string>& values,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::vector<data::Sequence>& eval_set,
                                       const TrackParams& track = {}) {
    check(!values.empty() && !seeds.empty(), "ablate: need at least one variant and seed");
    std::vector<AblationRow> rows;
    for (const std::string& value : values) {
        AblationRow row;
        row.label = key + "=" + value;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            apply_override(cfg, key, value);
            cfg.seed = seed;
            cfg.checkpoint.clear(); // in-memory runs
            cfg.quiet = true;
            TrainResult trained = train(cfg);
            const EvalReport report = evaluate(*trained.model, eval_set, track);
            row.per_seed_ao.push_back(report.ao);
            row.ao += report.ao;
            row.sr050 += report.sr050;
            row.sr075 += report.sr075;
        }
        const Real n = static_cast<Real>(seeds.size());
        row.ao /= n;
        row.sr050 /= n;
        row.sr075 /= n;
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace aftrack::harness
