// Command-line front end: train, eval, track, ablate, viz, gen.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aftrack/config.hpp"
#include "aftrack/harness.hpp"
#include "aftrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace aftrack;

namespace {

std::unique_ptr<Model> load_model(const std::string& checkpoint) {
    auto loaded = Model::load(checkpoint);
    std::printf("loaded checkpoint %s (step %lld)\n", checkpoint.c_str(),
                static_cast<long long>(loaded.step));
    return std::move(loaded.model);
}

/// DIR either is a sequence (has groundtruth.txt) or contains sequence dirs.
std::vector<data::DiskSequence> load_sequences(const std::string& dir) {
    std::vector<data::DiskSequence> out;
    if (fs::exists(fs::path(dir) / "groundtruth.txt")) {
        out.push_back(data::read_sequence_dir(dir));
        return out;
    }
    std::vector<std::string> subdirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory() && fs::exists(entry.path() / "groundtruth.txt"))
            subdirs.push_back(entry.path().string());
    std::sort(subdirs.begin(), subdirs.end());
    check(!subdirs.empty(), "no sequences found under " + dir);
    for (const auto& sub : subdirs) out.push_back(data::read_sequence_dir(sub));
    return out;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["ao"] = report.ao;
    j["sr050"] = report.sr050;
    j["sr075"] = report.sr075;
    j["sequences"] = report.iou_traces.size();
    j["frames"] = report.frame_count();
    j["precision_curve"] = report.precision_curve;
    std::vector<Real> per_seq;
    for (const auto& t : report.iou_traces) per_seq.push_back(average_overlap({t}));
    j["per_sequence_ao"] = per_seq;
    std::ofstream f(path);
    check(f.good(), "cannot write report " + path);
    f << j.dump(2) << "\n";
}

void print_report(const EvalReport& report) {
    std::printf("sequences\tframes\tAO\tSR@0.5\tSR@0.75\n");
    std::printf("%zu\t%lld\t%.4f\t%.4f\t%.4f\n", report.iou_traces.size(),
                static_cast<long long>(report.frame_count()), report.ao, report.sr050,
                report.sr075);
}

struct TrackRun {
    std::vector<Box> boxes; // one per frame, first = init
};

TrackRun run_tracker(Model& model, const data::DiskSequence& seq, const TrackParams& params,
                     const std::string& viz_dir) {
    Tracker tracker(model, params);
    TrackRun run;
    const Image first = seq.frame(0);
    TrackerState state = tracker.init(first, seq.boxes[0]);
    run.boxes.push_back(seq.boxes[0]);
    if (!viz_dir.empty()) fs::create_directories(viz_dir);

    const GridSpec grid = model.config().grid();
    for (int i = 1; i < seq.length(); ++i) {
        const Image frame = seq.frame(i);
        const auto result = tracker.step(state, frame);
        state = result.state;
        run.boxes.push_back(result.box);
        if (!viz_dir.empty()) {
            Image overlay = frame;
            if (static_cast<size_t>(i) < seq.boxes.size())
                draw_box(overlay, seq.boxes[static_cast<size_t>(i)], 0.1, 0.9, 0.1);
            draw_box(overlay, result.box, 0.95, 0.15, 0.15);
            char name[64];
            std::snprintf(name, sizeof(name), "%s/%06d_overlay.png", viz_dir.c_str(), i);
            save_image(overlay, name);
            const Image score =
                heatmap(result.final_score, grid.width, grid.height, model.config().instance_size);
            std::snprintf(name, sizeof(name), "%s/%06d_score.png", viz_dir.c_str(), i);
            save_image(score, name);
        }
    }
    return run;
}

void write_boxes(const TrackRun& run, const std::string& path) {
    std::ofstream f(path);
    check(f.good(), "cannot write " + path);
    for (const Box& b : run.boxes) {
        char line[128];
        std::snprintf(line, sizeof(line), "%.2f,%.2f,%.2f,%.2f\n", b.x0, b.y0, b.width(),
                      b.height());
        f << line;
    }
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"anchor-free Siamese tracker with hard-negative-emphasis training"};
    app.require_subcommand(1);

    // ---- train ----
    auto* cmd_train = app.add_subcommand("train", "train a model from a config file");
    std::string train_config;
    std::int64_t train_seed = -1;
    cmd_train->add_option("--config", train_config, "JSON config")->required();
    cmd_train->add_option("--seed", train_seed, "override train.seed");
    cmd_train->callback([&] {
        AppConfig cfg = load_config(train_config);
        if (train_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(train_seed);
        const auto result = harness::train(cfg.train);
        std::printf("done: %d steps, checkpoint %s\n", cfg.train.steps,
                    cfg.train.checkpoint.c_str());
        const auto eval_set = harness::make_eval_set(cfg.eval_scene(), cfg.eval_sequences,
                                                     cfg.eval_seed);
        const EvalReport report = harness::evaluate(*result.model, eval_set, cfg.track);
        print_report(report);
    });

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on sequence directories");
    std::string eval_ckpt, eval_data, eval_report;
    cmd_eval->add_option("--checkpoint", eval_ckpt)->required();
    cmd_eval->add_option("--data", eval_data, "sequence dir or dir of sequence dirs")->required();
    cmd_eval->add_option("--report", eval_report, "machine-readable JSON output");
    cmd_eval->callback([&] {
        auto model = load_model(eval_ckpt);
        const auto sequences = load_sequences(eval_data);
        const EvalReport report = harness::evaluate_disk(*model, sequences);
        print_report(report);
        if (!eval_report.empty()) write_report_json(report, eval_report);
    });

    // ---- track ----
    auto* cmd_track = app.add_subcommand("track", "run the tracker over one sequence");
    std::string track_ckpt, track_seq, track_out, track_viz;
    cmd_track->add_option("--checkpoint", track_ckpt)->required();
    cmd_track->add_option("--sequence", track_seq)->required();
    cmd_track->add_option("--output", track_out, "one x,y,w,h line per frame")->required();
    cmd_track->add_option("--viz", track_viz, "write overlay / score images here");
    cmd_track->callback([&] {
        auto model = load_model(track_ckpt);
        const auto seq = data::read_sequence_dir(track_seq);
        const TrackRun run = run_tracker(*model, seq, {}, track_viz);
        write_boxes(run, track_out);
        std::printf("tracked %d frames -> %s\n", seq.length(), track_out.c_str());
    });

    // ---- ablate ----
    auto* cmd_ablate = app.add_subcommand("ablate", "train variants and compare metrics");
    std::string ab_config, ab_sweep, ab_seeds = "1,2,3", ab_report;
    cmd_ablate->add_option("--config", ab_config)->required();
    cmd_ablate->add_option("--sweep", ab_sweep, "KEY=V1,V2,... (e.g. hne.enabled=true,false)")
        ->required();
    cmd_ablate->add_option("--seeds", ab_seeds, "comma-separated training seeds");
    cmd_ablate->add_option("--report", ab_report, "TSV output");
    cmd_ablate->callback([&] {
        AppConfig cfg = load_config(ab_config);
        const auto eq = ab_sweep.find('=');
        check(eq != std::string::npos, "--sweep expects KEY=V1,V2,...");
        const std::string key = ab_sweep.substr(0, eq);
        const auto values = split_csv(ab_sweep.substr(eq + 1));
        std::vector<std::uint64_t> seeds;
        for (const auto& s : split_csv(ab_seeds)) seeds.push_back(std::stoull(s));
        const auto eval_set = harness::make_eval_set(cfg.eval_scene(), cfg.eval_sequences,
                                                     cfg.eval_seed);
        const auto rows = harness::ablate(cfg.train, key, values, seeds, eval_set, cfg.track);
        std::string table = "variant\tAO\tSR@0.5\tSR@0.75\n";
        for (const auto& row : rows) {
            char line[256];
            std::snprintf(line, sizeof(line), "%s\t%.4f\t%.4f\t%.4f\n", row.label.c_str(), row.ao,
                          row.sr050, row.sr075);
            table += line;
        }
        std::printf("%s", table.c_str());
        if (!ab_report.empty()) {
            std::ofstream f(ab_report);
            check(f.good(), "cannot write " + ab_report);
            f << table;
        }
    });

    // ---- viz ----
    auto* cmd_viz = app.add_subcommand("viz", "overlay and score-map images for one sequence");
    std::string viz_ckpt, viz_seq, viz_out;
    cmd_viz->add_option("--checkpoint", viz_ckpt)->required();
    cmd_viz->add_option("--sequence", viz_seq)->required();
    cmd_viz->add_option("--out", viz_out)->required();
    cmd_viz->callback([&] {
        auto model = load_model(viz_ckpt);
        const auto seq = data::read_sequence_dir(viz_seq);
        run_tracker(*model, seq, {}, viz_out);
        std::printf("wrote %d overlay/score pairs to %s\n", seq.length() - 1, viz_out.c_str());
    });

    // ---- gen ----
    auto* cmd_gen = app.add_subcommand("gen", "write synthetic sequences to disk");
    std::string gen_out;
    int gen_count = 10, gen_distractors = 0, gen_length = 40, gen_clutter = 3;
    int gen_width = 256, gen_height = 256;
    std::uint64_t gen_seed = 1;
    cmd_gen->add_option("--out", gen_out)->required();
    cmd_gen->add_option("--sequences", gen_count);
    cmd_gen->add_option("--distractors", gen_distractors);
    cmd_gen->add_option("--length", gen_length);
    cmd_gen->add_option("--clutter", gen_clutter);
    cmd_gen->add_option("--width", gen_width);
    cmd_gen->add_option("--height", gen_height);
    cmd_gen->add_option("--seed", gen_seed);
    cmd_gen->callback([&] {
        data::SceneConfig scene;
        scene.distractors = gen_distractors;
        scene.length = gen_length;
        scene.clutter = gen_clutter;
        scene.frame_width = gen_width;
        scene.frame_height = gen_height;
        for (int i = 0; i < gen_count; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s/seq%04d", gen_out.c_str(), i);
            data::write_sequence(data::Sequence(scene, gen_seed + 7919ull * i), name);
        }
        std::printf("wrote %d sequences to %s\n", gen_count, gen_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
