#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "aftrack/assignment.hpp"
#include "aftrack/autodiff.hpp"

namespace aftrack {

/// Network geometry and widths. The backbone contract every downstream
/// module relies on: three feature levels at a common stride of 8 with a
/// common channel count after the 1x1 adjust.
struct ModelConfig {
    int exemplar_size = 127;
    int instance_size = 255;
    int channels = 64;       // adjusted channel count, common to all levels
    int tower_channels = 32; // width of the score/regression towers
    int embed_dim = 128;     // contrastive embedding dimension
    int embed_hidden = 64;
    int exemplar_kernel = 7; // correlation kernel after center crop
    int norm_groups = 8;
    int stem1 = 16, stem2 = 24, block_width = 32;

    static constexpr int kStride = 8;

    // three valid stride-2 3x3 convolutions
    static int feature_size(int input) {
        int n = input;
        for (int i = 0; i < 3; ++i) n = (n - 3) / 2 + 1;
        return n;
    }

    int exemplar_feat() const { return feature_size(exemplar_size); }
    int instance_feat() const { return feature_size(instance_size); }
    int score_size() const { return instance_feat() - exemplar_kernel + 1; }

    GridSpec grid() const {
        return GridSpec(kStride, score_size(), score_size(), instance_size);
    }

    void validate() const {
        check(exemplar_feat() >= exemplar_kernel,
              "ModelConfig: exemplar too small for the correlation kernel");
        check(channels % norm_groups == 0 && tower_channels % norm_groups == 0,
              "ModelConfig: widths must be divisible by norm groups");
        grid(); // throws if the score grid does not map inside the instance
    }

    /// Half-scale variant used for CPU-budget training runs.
    static ModelConfig reduced() {
        ModelConfig c;
        c.exemplar_size = 63;
        c.instance_size = 191;
        c.tower_channels = 16;
        return c;
    }
};

/// One head's maps in the value domain: score logits [2,H,W] (channel 1 =
/// foreground), centerness logit [1,H,W], side distances [4,H,W] in pixels.
struct HeadOutput {
    Tensor score;
    Tensor cen;
    Tensor reg;
};

/// Trainable per-level mixing weights for the three output types, stored as
/// free scalars and normalized to a convex combination at use time.
struct FusionWeights {
    std::array<Real, 3> score_raw{0, 0, 0};
    std::array<Real, 3> cen_raw{0, 0, 0};
    std::array<Real, 3> reg_raw{0, 0, 0};

    static std::array<Real, 3> softmax(const std::array<Real, 3>& w) {
        const Real m = std::max(w[0], std::max(w[1], w[2]));
        std::array<Real, 3> e{std::exp(w[0] - m), std::exp(w[1] - m), std::exp(w[2] - m)};
        const Real s = e[0] + e[1] + e[2];
        return {e[0] / s, e[1] / s, e[2] / s};
    }

    std::array<Real, 3> score() const { return softmax(score_raw); }
    std::array<Real, 3> cen() const { return softmax(cen_raw); }
    std::array<Real, 3> reg() const { return softmax(reg_raw); }
};

/// Mechanical fusion of three aligned heads under already-convex weights.
inline HeadOutput fuse(const std::array<HeadOutput, 3>& heads,
                       const std::array<Real, 3>& w_score, const std::array<Real, 3>& w_cen,
                       const std::array<Real, 3>& w_reg) {
    for (int i = 1; i < 3; ++i)
        check(heads[i].score.same_shape(heads[0].score) && heads[i].cen.same_shape(heads[0].cen) &&
                  heads[i].reg.same_shape(heads[0].reg),
              "fuse: head outputs must be spatially identical");
    auto mix = [](const Tensor& a, const Tensor& b, const Tensor& c,
                  const std::array<Real, 3>& w) {
        Tensor out(a.shape);
        for (std::int64_t i = 0; i < a.numel(); ++i)
            out.v[i] = w[0] * a.v[i] + w[1] * b.v[i] + w[2] * c.v[i];
        return out;
    };
    return {mix(heads[0].score, heads[1].score, heads[2].score, w_score),
            mix(heads[0].cen, heads[1].cen, heads[2].cen, w_cen),
            mix(heads[0].reg, heads[1].reg, heads[2].reg, w_reg)};
}

/// The Siamese tracker network. One parameter store serves both branches;
/// a single instance is not meant for concurrent training and inference.
class Model {
public:
    explicit Model(const ModelConfig& config, std::uint64_t init_seed = 1)
        : cfg_(config) {
        cfg_.validate();
        Rng rng(init_seed ^ 0xa5a5a5a5ull);
        build(rng);
    }

    const ModelConfig& config() const { return cfg_; }

    std::vector<nn::Parameter*> parameters() {
        std::vector<nn::Parameter*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    nn::Parameter* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    FusionWeights fusion_weights() const {
        FusionWeights w;
        for (int i = 0; i < 3; ++i) {
            w.score_raw[i] = fuse_score_->value.v[i];
            w.cen_raw[i] = fuse_cen_->value.v[i];
            w.reg_raw[i] = fuse_reg_->value.v[i];
        }
        return w;
    }

    // ---- graph-building forward passes --------------------------------------

    struct Levels {
        std::array<nn::Var, 3> feat; // adjusted phi_2, phi_3, phi_4
    };

    struct HeadVars {
        nn::Var score;
        nn::Var cen;
        nn::Var reg;
    };

    struct PairForward {
        Levels z, x;
        std::array<HeadVars, 3> heads;
        HeadVars fused;
        nn::Var z_embed_feat; // Cat(phi_3(z), phi_4(z))
        nn::Var x_embed_feat; // Cat(phi_3(x), phi_4(x))
    };

    /// Shared-weight feature extractor: both branches call this one function.
    Levels branch(nn::Tape& t, nn::Var image) {
        nn::Var h = block(t, image, "bb1", 2, 0);
        h = block(t, h, "bb2", 2, 0);
        nn::Var tap2 = block(t, h, "bb3", 2, 0);
        nn::Var tap3 = block(t, tap2, "bb4", 1, 1);
        nn::Var tap4 = block(t, tap3, "bb5", 1, 1);
        Levels out;
        const char* names[3] = {"adj2", "adj3", "adj4"};
        nn::Var taps[3] = {tap2, tap3, tap4};
        for (int i = 0; i < 3; ++i) {
            nn::Var a = t.conv2d(taps[i], pv(t, std::string(names[i]) + ".w"),
                                 pv(t, std::string(names[i]) + ".b"), 1, 0);
            out.feat[i] = t.group_norm(a, pv(t, std::string(names[i]) + ".g"),
                                       pv(t, std::string(names[i]) + ".be"), cfg_.norm_groups);
        }
        return out;
    }

    /// One anchor-free head: branch-specific adjusts, depthwise correlation,
    /// then the two four-layer 3x3 towers; centerness forks off the score
    /// trunk through a 1x1 convolution.
    HeadVars head(nn::Tape& t, int level, nn::Var zf, nn::Var xf) {
        const std::string hp = "head" + std::to_string(level) + ".";
        auto adjust = [&](nn::Var in, const std::string& tag) {
            nn::Var c = t.conv2d(in, pv(t, hp + tag + ".w"), pv(t, hp + tag + ".b"), 1, 0);
            return t.group_norm(c, pv(t, hp + tag + ".g"), pv(t, hp + tag + ".be"),
                                cfg_.norm_groups);
        };
        nn::Var z_cls = t.center_crop(adjust(zf, "zcls"), cfg_.exemplar_kernel);
        nn::Var z_reg = t.center_crop(adjust(zf, "zreg"), cfg_.exemplar_kernel);
        nn::Var x_cls = adjust(xf, "xcls");
        nn::Var x_reg = adjust(xf, "xreg");

        const Real corr_scale =
            1.0 / std::sqrt(static_cast<Real>(cfg_.exemplar_kernel * cfg_.exemplar_kernel) *
                            cfg_.channels);
        nn::Var corr_cls = t.scale(t.dw_xcorr(z_cls, x_cls), corr_scale);
        nn::Var corr_reg = t.scale(t.dw_xcorr(z_reg, x_reg), corr_scale);

        auto tower = [&](nn::Var in, const std::string& tag) {
            nn::Var h = in;
            for (int i = 0; i < 3; ++i) {
                const std::string lp = hp + tag + std::to_string(i);
                h = t.conv2d(h, pv(t, lp + ".w"), pv(t, lp + ".b"), 1, 1);
                h = t.group_norm(h, pv(t, lp + ".g"), pv(t, lp + ".be"), cfg_.norm_groups);
                h = t.relu(h);
            }
            return h;
        };
        nn::Var score_trunk = tower(corr_cls, "st");
        nn::Var reg_trunk = tower(corr_reg, "rt");

        HeadVars out;
        out.score = t.conv2d(score_trunk, pv(t, hp + "score.w"), pv(t, hp + "score.b"), 1, 1);
        out.cen = t.conv2d(score_trunk, pv(t, hp + "cen.w"), pv(t, hp + "cen.b"), 1, 0);
        out.reg = t.exp(t.conv2d(reg_trunk, pv(t, hp + "reg.w"), pv(t, hp + "reg.b"), 1, 1));
        return out;
    }

    /// Full training-time forward for a batch of exemplar/instance pairs.
    PairForward forward_pair(nn::Tape& t, const Tensor& z_images, const Tensor& x_images) {
        check(z_images.ndim() == 4 && z_images.dim(2) == cfg_.exemplar_size &&
                  z_images.dim(3) == cfg_.exemplar_size,
              "forward_pair: exemplar batch has wrong size");
        check(x_images.ndim() == 4 && x_images.dim(2) == cfg_.instance_size &&
                  x_images.dim(3) == cfg_.instance_size,
              "forward_pair: instance batch has wrong size");
        PairForward out;
        out.z = branch(t, t.constant(z_images));
        out.x = branch(t, t.constant(x_images));
        for (int i = 0; i < 3; ++i) out.heads[i] = head(t, i + 2, out.z.feat[i], out.x.feat[i]);
        out.fused.score = t.weighted_sum3(out.heads[0].score, out.heads[1].score,
                                          out.heads[2].score, t.param(*fuse_score_));
        out.fused.cen = t.weighted_sum3(out.heads[0].cen, out.heads[1].cen, out.heads[2].cen,
                                        t.param(*fuse_cen_));
        out.fused.reg = t.weighted_sum3(out.heads[0].reg, out.heads[1].reg, out.heads[2].reg,
                                        t.param(*fuse_reg_));
        out.z_embed_feat = t.concat_channels(out.z.feat[1], out.z.feat[2]);
        out.x_embed_feat = t.concat_channels(out.x.feat[1], out.x.feat[2]);
        return out;
    }

    /// Pooled-region embedding: RoIs in feature coordinates over
    /// Cat(phi_3, phi_4), pooled to 5x5 and reduced to a D-vector by two
    /// convolutions. Returns [R, D, 1, 1].
    nn::Var embed_rois(nn::Tape& t, nn::Var cat_feat, const std::vector<nn::Tape::Roi>& rois) {
        nn::Var pooled = t.roi_align(cat_feat, rois, 5);
        nn::Var h = t.conv2d(pooled, pv(t, "emb0.w"), pv(t, "emb0.b"), 1, 0); // 5 -> 3
        h = t.group_norm(h, pv(t, "emb0.g"), pv(t, "emb0.be"), cfg_.norm_groups);
        h = t.relu(h);
        return t.conv2d(h, pv(t, "emb1.w"), pv(t, "emb1.b"), 1, 0); // 3 -> 1
    }

    // ---- value-domain inference ---------------------------------------------

    struct FeaturePyramid {
        std::array<Tensor, 3> levels;
    };

    /// Adjusted multi-level features of one image [1,3,S,S], value domain.
    FeaturePyramid extract_features(const Tensor& image) {
        check(image.ndim() == 4 && image.dim(0) == 1 && image.dim(1) == 3,
              "extract_features: [1,3,S,S] image required");
        check((image.dim(2) == cfg_.exemplar_size && image.dim(3) == cfg_.exemplar_size) ||
                  (image.dim(2) == cfg_.instance_size && image.dim(3) == cfg_.instance_size),
              "extract_features: image must be exemplar- or instance-sized");
        ++feature_extractions_;
        nn::Tape t(false);
        Levels l = branch(t, t.constant(image));
        FeaturePyramid out;
        for (int i = 0; i < 3; ++i) out.levels[i] = l.feat[i]->val;
        return out;
    }

    /// Per-level head outputs for cached exemplar features against one
    /// instance image; plus the fused maps under the trained weights.
    struct InferenceResult {
        std::array<HeadOutput, 3> heads;
        HeadOutput fused;
    };

    InferenceResult infer(const Tensor& z_image, const Tensor& x_image) {
        return infer_cached(extract_features(z_image), x_image);
    }

    /// Same as infer() but with precomputed exemplar features, so a tracker
    /// extracts them exactly once per sequence.
    InferenceResult infer_cached(const FeaturePyramid& z_feats, const Tensor& x_image) {
        nn::Tape t(false);
        Levels x = branch(t, t.constant(x_image));
        InferenceResult out;
        std::array<HeadOutput, 3> heads;
        for (int i = 0; i < 3; ++i) {
            HeadVars hv = head(t, i + 2, t.constant(z_feats.levels[i]), x.feat[i]);
            heads[i] = {hv.score->val, hv.cen->val, hv.reg->val};
        }
        const FusionWeights w = fusion_weights();
        out.fused = fuse(heads, w.score(), w.cen(), w.reg());
        out.heads = std::move(heads);
        return out;
    }

    /// Count of extract_features calls (used to verify exemplar caching).
    std::int64_t feature_extraction_count() const { return feature_extractions_; }

    // ---- persistence ---------------------------------------------------------

    void save(const std::string& path, std::int64_t step, std::uint64_t seed,
              const std::vector<Tensor>* momentum = nullptr) const {
        std::ofstream f(path, std::ios::binary);
        check(f.good(), "save: cannot open " + path);
        const char magic[8] = {'A', 'F', 'T', 'K', '0', '1', '\n', 0};
        f.write(magic, 8);
        auto wi = [&](std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
        wi(cfg_.exemplar_size);
        wi(cfg_.instance_size);
        wi(cfg_.channels);
        wi(cfg_.tower_channels);
        wi(cfg_.embed_dim);
        wi(cfg_.embed_hidden);
        wi(cfg_.exemplar_kernel);
        wi(cfg_.norm_groups);
        wi(cfg_.stem1);
        wi(cfg_.stem2);
        wi(cfg_.block_width);
        wi(step);
        wi(static_cast<std::int64_t>(seed));
        wi(static_cast<std::int64_t>(params_.size()));
        for (const auto& p : params_) {
            wi(static_cast<std::int64_t>(p->name.size()));
            f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
            wi(p->value.ndim());
            for (int d : p->value.shape) wi(d);
            f.write(reinterpret_cast<const char*>(p->value.data()),
                    static_cast<std::streamsize>(p->value.numel() * sizeof(Real)));
        }
        wi(momentum ? 1 : 0);
        if (momentum) {
            check(momentum->size() == params_.size(), "save: momentum size mismatch");
            for (const auto& m : *momentum)
                f.write(reinterpret_cast<const char*>(m.data()),
                        static_cast<std::streamsize>(m.numel() * sizeof(Real)));
        }
        check(f.good(), "save: write failed for " + path);
        write_manifest(path + ".manifest", step, seed);
    }

    struct Loaded {
        std::unique_ptr<Model> model;
        std::int64_t step = 0;
        std::uint64_t seed = 0;
        std::vector<Tensor> momentum; // empty if not stored
    };

    static Loaded load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        check(f.good(), "load: cannot open " + path);
        char magic[8];
        f.read(magic, 8);
        check(std::string(magic, 6) == "AFTK01", "load: bad checkpoint magic");
        auto ri = [&]() {
            std::int64_t v = 0;
            f.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        ModelConfig cfg;
        cfg.exemplar_size = static_cast<int>(ri());
        cfg.instance_size = static_cast<int>(ri());
        cfg.channels = static_cast<int>(ri());
        cfg.tower_channels = static_cast<int>(ri());
        cfg.embed_dim = static_cast<int>(ri());
        cfg.embed_hidden = static_cast<int>(ri());
        cfg.exemplar_kernel = static_cast<int>(ri());
        cfg.norm_groups = static_cast<int>(ri());
        cfg.stem1 = static_cast<int>(ri());
        cfg.stem2 = static_cast<int>(ri());
        cfg.block_width = static_cast<int>(ri());
        Loaded out;
        out.step = ri();
        out.seed = static_cast<std::uint64_t>(ri());
        out.model = std::make_unique<Model>(cfg);
        const std::int64_t count = ri();
        check(count == static_cast<std::int64_t>(out.model->params_.size()),
              "load: parameter count mismatch");
        for (auto& p : out.model->params_) {
            const std::int64_t len = ri();
            std::string name(static_cast<size_t>(len), 0);
            f.read(name.data(), len);
            check(name == p->name, "load: parameter order mismatch at " + p->name);
            const std::int64_t nd = ri();
            std::vector<int> shape;
            for (int i = 0; i < nd; ++i) shape.push_back(static_cast<int>(ri()));
            check(shape == p->value.shape, "load: shape mismatch at " + p->name);
            f.read(reinterpret_cast<char*>(p->value.data()),
                   static_cast<std::streamsize>(p->value.numel() * sizeof(Real)));
        }
        if (ri() == 1) {
            for (auto& p : out.model->params_) {
                Tensor m(p->value.shape);
                f.read(reinterpret_cast<char*>(m.data()),
                       static_cast<std::streamsize>(m.numel() * sizeof(Real)));
                out.momentum.push_back(std::move(m));
            }
        }
        check(f.good(), "load: truncated checkpoint " + path);
        return out;
    }

private:
    void write_manifest(const std::string& path, std::int64_t step, std::uint64_t seed) const {
        std::ofstream f(path);
        check(f.good(), "save: cannot open " + path);
        const FusionWeights w = fusion_weights();
        f << "stride " << ModelConfig::kStride << "\n";
        f << "channels " << cfg_.channels << "\n";
        f << "exemplar_size " << cfg_.exemplar_size << "\n";
        f << "instance_size " << cfg_.instance_size << "\n";
        f << "step " << step << "\n";
        f << "seed " << seed << "\n";
        auto line = [&](const char* tag, const std::array<Real, 3>& v) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f\n", tag, v[0], v[1], v[2]);
            f << buf;
        };
        line("fusion_score", w.score());
        line("fusion_centerness", w.cen());
        line("fusion_regression", w.reg());
    }

    nn::Parameter* add(const std::string& name, Tensor t, bool backbone) {
        params_.push_back(std::make_unique<nn::Parameter>(name, std::move(t), backbone));
        return params_.back().get();
    }

    void add_conv(const std::string& name, int out_ch, int in_ch, int k, Rng& rng, bool backbone,
                  bool with_norm, Real w_std = -1, Real bias = 0) {
        const Real stddev = w_std > 0 ? w_std : std::sqrt(2.0 / (in_ch * k * k));
        add(name + ".w", Tensor::randn({out_ch, in_ch, k, k}, rng, stddev), backbone);
        add(name + ".b", Tensor({out_ch}, bias), backbone);
        if (with_norm) {
            add(name + ".g", Tensor({out_ch}, 1.0), backbone);
            add(name + ".be", Tensor({out_ch}, 0.0), backbone);
        }
    }

    void build(Rng& rng) {
        add_conv("bb1", cfg_.stem1, 3, 3, rng, true, true);
        add_conv("bb2", cfg_.stem2, cfg_.stem1, 3, rng, true, true);
        add_conv("bb3", cfg_.block_width, cfg_.stem2, 3, rng, true, true);
        add_conv("bb4", cfg_.block_width, cfg_.block_width, 3, rng, true, true);
        add_conv("bb5", cfg_.block_width, cfg_.block_width, 3, rng, true, true);
        // channel adjusts are neck layers: they train through the
        // frozen-backbone phase like the heads do
        for (const char* a : {"adj2", "adj3", "adj4"})
            add_conv(a, cfg_.channels, cfg_.block_width, 1, rng, false, true);

        for (int level = 2; level <= 4; ++level) {
            const std::string hp = "head" + std::to_string(level) + ".";
            for (const char* a : {"zcls", "zreg", "xcls", "xreg"})
                add_conv(hp + a, cfg_.channels, cfg_.channels, 1, rng, false, true);
            for (const char* tower : {"st", "rt"})
                for (int i = 0; i < 3; ++i)
                    add_conv(hp + tower + std::to_string(i),
                             cfg_.tower_channels, i == 0 ? cfg_.channels : cfg_.tower_channels, 3,
                             rng, false, true);
            // slightly negative foreground prior keeps early score maps quiet
            add_conv(hp + "score", 2, cfg_.tower_channels, 3, rng, false, false, 0.01);
            find(hp + "score.b")->value.v[1] = -2.0;
            add_conv(hp + "cen", 1, cfg_.tower_channels, 1, rng, false, false, 0.01);
            // boxes start out ~40 px wide (bias exp(3) per side)
            add_conv(hp + "reg", 4, cfg_.tower_channels, 3, rng, false, false, 0.01, 3.0);
        }

        add_conv("emb0", cfg_.embed_hidden, 2 * cfg_.channels, 3, rng, false, true);
        add_conv("emb1", cfg_.embed_dim, cfg_.embed_hidden, 3, rng, false, false);

        fuse_score_ = add("fuse.score", Tensor({3}, 0.0), false);
        fuse_cen_ = add("fuse.cen", Tensor({3}, 0.0), false);
        fuse_reg_ = add("fuse.reg", Tensor({3}, 0.0), false);
    }

    nn::Var pv(nn::Tape& t, const std::string& name) {
        nn::Parameter* p = find(name);
        check(p != nullptr, "unknown parameter " + name);
        return t.param(*p);
    }

    nn::Var block(nn::Tape& t, nn::Var in, const std::string& name, int stride, int pad) {
        nn::Var c = t.conv2d(in, pv(t, name + ".w"), pv(t, name + ".b"), stride, pad);
        nn::Var n = t.group_norm(c, pv(t, name + ".g"), pv(t, name + ".be"), cfg_.norm_groups);
        return t.relu(n);
    }

    ModelConfig cfg_;
    std::vector<std::unique_ptr<nn::Parameter>> params_;
    nn::Parameter* fuse_score_ = nullptr;
    nn::Parameter* fuse_cen_ = nullptr;
    nn::Parameter* fuse_reg_ = nullptr;
    std::int64_t feature_extractions_ = 0;
};

} // namespace aftrack
