#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "aftrack/losses.hpp"
#include "aftrack/model.hpp"

using namespace aftrack;

namespace {
Tensor random_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({1, 3, size, size});
    for (auto& v : t.v) v = rng.uniform();
    return t;
}
} // namespace

TEST(ModelConfig, DefaultFeatureGeometry) {
    const ModelConfig cfg;
    EXPECT_EQ(cfg.exemplar_feat(), 15);
    EXPECT_EQ(cfg.instance_feat(), 31);
    EXPECT_EQ(cfg.score_size(), 25);
    cfg.validate();

    const ModelConfig reduced = ModelConfig::reduced();
    EXPECT_EQ(reduced.exemplar_feat(), 7);
    EXPECT_EQ(reduced.instance_feat(), 23);
    EXPECT_EQ(reduced.score_size(), 17);
    reduced.validate();
}

TEST(ExtractFeatures, LevelShapes) {
    Model model(ModelConfig{}, 3);
    const auto zf = model.extract_features(random_image(127, 1));
    for (const auto& level : zf.levels)
        EXPECT_EQ(level.shape, (std::vector<int>{1, 64, 15, 15}));
    const auto xf = model.extract_features(random_image(255, 2));
    for (const auto& level : xf.levels)
        EXPECT_EQ(level.shape, (std::vector<int>{1, 64, 31, 31}));
    EXPECT_THROW(model.extract_features(random_image(100, 3)), std::invalid_argument);
}

TEST(ExtractFeatures, SharedWeightsAcrossBranches) {
    Model model(ModelConfig{}, 3);
    const Tensor img = random_image(127, 7);
    const auto a = model.extract_features(img);
    const auto b = model.extract_features(img);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(a.levels[i].v, b.levels[i].v); // identical

    // one parameter store: mutating it is observable from any branch pass
    nn::Parameter* w = model.find("bb3.w");
    ASSERT_NE(w, nullptr);
    w->value.v[0] += 0.5;
    const auto c = model.extract_features(img);
    EXPECT_NE(a.levels[0].v, c.levels[0].v);
}

TEST(Head, OutputShapesAndPositivity) {
    Model model(ModelConfig{}, 5);
    const auto result = model.infer(random_image(127, 11), random_image(255, 12));
    for (const auto& h : result.heads) {
        EXPECT_EQ(h.score.shape, (std::vector<int>{1, 2, 25, 25}));
        EXPECT_EQ(h.cen.shape, (std::vector<int>{1, 1, 25, 25}));
        EXPECT_EQ(h.reg.shape, (std::vector<int>{1, 4, 25, 25}));
        for (Real v : h.reg.v) EXPECT_GT(v, 0.0); // exp transform
    }
    EXPECT_EQ(result.fused.score.shape, (std::vector<int>{1, 2, 25, 25}));
}

TEST(Head, Deterministic) {
    Model model(ModelConfig::reduced(), 5);
    const Tensor z = random_image(63, 1);
    const Tensor x = random_image(191, 2);
    const auto a = model.infer(z, x);
    const auto b = model.infer(z, x);
    EXPECT_EQ(a.fused.score.v, b.fused.score.v);
    EXPECT_EQ(a.fused.cen.v, b.fused.cen.v);
    EXPECT_EQ(a.fused.reg.v, b.fused.reg.v);
}

TEST(Head, CachedExemplarMatchesFreshExtraction) {
    Model model(ModelConfig::reduced(), 9);
    const Tensor z = random_image(63, 3);
    const Tensor x = random_image(191, 4);
    const auto cache = model.extract_features(z);
    const auto a = model.infer_cached(cache, x);
    const auto b = model.infer(z, x);
    EXPECT_EQ(a.fused.score.v, b.fused.score.v);
}

TEST(Fuse, OneHotWeightsSelectThatHead) {
    Rng rng(13);
    std::array<HeadOutput, 3> heads;
    for (auto& h : heads) {
        h.score = Tensor::randn({1, 2, 5, 5}, rng);
        h.cen = Tensor::randn({1, 1, 5, 5}, rng);
        h.reg = Tensor::randn({1, 4, 5, 5}, rng);
    }
    const HeadOutput picked = fuse(heads, {0, 1, 0}, {0, 1, 0}, {0, 1, 0});
    EXPECT_EQ(picked.score.v, heads[1].score.v); // exact
    EXPECT_EQ(picked.cen.v, heads[1].cen.v);
    EXPECT_EQ(picked.reg.v, heads[1].reg.v);
}

TEST(Fuse, IdenticalHeadsAreAFixedPoint) {
    Rng rng(17);
    HeadOutput h;
    h.score = Tensor::randn({1, 2, 4, 4}, rng);
    h.cen = Tensor::randn({1, 1, 4, 4}, rng);
    h.reg = Tensor::randn({1, 4, 4, 4}, rng);
    const std::array<Real, 3> w{0.2, 0.5, 0.3};
    const HeadOutput fused = fuse({h, h, h}, w, w, w);
    for (std::int64_t i = 0; i < h.score.numel(); ++i)
        EXPECT_NEAR(fused.score.v[i], h.score.v[i], 1e-12);
}

TEST(Fuse, MatchesManualWeightedSum) {
    Rng rng(19);
    std::array<HeadOutput, 3> heads;
    for (auto& h : heads) {
        h.score = Tensor::randn({1, 2, 3, 3}, rng);
        h.cen = Tensor::randn({1, 1, 3, 3}, rng);
        h.reg = Tensor::randn({1, 4, 3, 3}, rng);
    }
    const std::array<Real, 3> w = FusionWeights::softmax({0.4, -0.3, 1.1});
    const HeadOutput fused = fuse(heads, w, w, w);
    for (std::int64_t i = 0; i < fused.score.numel(); ++i) {
        const Real manual =
            w[0] * heads[0].score.v[i] + w[1] * heads[1].score.v[i] + w[2] * heads[2].score.v[i];
        EXPECT_NEAR(fused.score.v[i], manual, 1e-6);
    }
    EXPECT_THROW(
        fuse({heads[0], heads[1],
              HeadOutput{Tensor({1, 2, 4, 4}), Tensor({1, 1, 4, 4}), Tensor({1, 4, 4, 4})}},
             w, w, w),
        std::invalid_argument);
}

TEST(FusionWeights, SoftmaxNormalizedConvex) {
    const auto s = FusionWeights::softmax({2.0, -1.0, 0.5});
    EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-12);
    for (Real v : s) EXPECT_GT(v, 0.0);
}

TEST(Model, GradientReachesBackboneFromEveryLoss) {
    Model model(ModelConfig::reduced(), 21);
    const ModelConfig& cfg = model.config();
    Rng rng(5);
    Tensor z({1, 3, cfg.exemplar_size, cfg.exemplar_size});
    Tensor x({1, 3, cfg.instance_size, cfg.instance_size});
    for (auto& v : z.v) v = rng.uniform();
    for (auto& v : x.v) v = rng.uniform();

    const GridSpec grid = cfg.grid();
    const Box gt = Box::from_center(cfg.instance_size / 2.0, cfg.instance_size / 2.0, 60, 48);
    const LabelMaps maps = assign_labels(gt, grid);
    ASSERT_GT(maps.positives, 0);

    const int H = grid.height, W = grid.width;
    Tensor cls({1, 1, H, W}), cen({1, 1, H, W}), reg({1, 4, H, W}), mask({1, 1, H, W});
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(maps.cls.size()); ++i) {
        cls.v[i] = maps.cls[i];
        mask.v[i] = maps.cls[i];
        cen.v[i] = maps.cen[i];
    }
    for (std::int64_t i = 0; i < 4LL * H * W; ++i) reg.v[i] = std::max(maps.reg[i], 1e-3);

    const auto backbone_grad_norm = [&](int which) {
        model.zero_grad();
        nn::Tape tape;
        auto fw = model.forward_pair(tape, z, x);
        nn::Var loss = nullptr;
        switch (which) {
            case 0: loss = losses::focal_loss(tape, fw.fused.score, cls); break;
            case 1: loss = losses::centerness_bce_logits(tape, fw.fused.cen, cen, mask); break;
            case 2: loss = losses::iou_loss(tape, fw.fused.reg, reg, mask); break;
            default: {
                const Real off = ModelConfig::kStride / 2;
                const Real s = ModelConfig::kStride;
                std::vector<nn::Tape::Roi> rois = {
                    {0, (gt.x0 - off) / s, (gt.y0 - off) / s, (gt.x1 - off) / s,
                     (gt.y1 - off) / s},
                    {0, 0.5, 0.5, 4.5, 4.5}};
                nn::Var emb = model.embed_rois(tape, fw.x_embed_feat, rois);
                // positive pair: the pull term is active at any distance
                loss = losses::contrastive_embeddings(tape, emb, emb, {{0, {1}, {1}}}, 2.0);
            }
        }
        tape.backward(loss);
        Real norm = 0;
        for (nn::Parameter* p : model.parameters())
            if (p->backbone)
                for (Real g : p->grad.v) norm += g * g;
        return std::sqrt(norm);
    };

    for (int which = 0; which < 4; ++which)
        EXPECT_GT(backbone_grad_norm(which), 0.0) << "loss " << which;
}

TEST(Model, CheckpointRoundtrip) {
    const std::string path = ::testing::TempDir() + "aftrack_ckpt_test.bin";
    Model model(ModelConfig::reduced(), 23);
    model.find("fuse.score")->value.v = {0.3, -0.2, 0.8};
    model.save(path, 1234, 99);

    auto loaded = Model::load(path);
    EXPECT_EQ(loaded.step, 1234);
    EXPECT_EQ(loaded.seed, 99u);
    EXPECT_EQ(loaded.model->config().exemplar_size, 63);
    for (nn::Parameter* p : model.parameters()) {
        nn::Parameter* q = loaded.model->find(p->name);
        ASSERT_NE(q, nullptr) << p->name;
        EXPECT_EQ(p->value.v, q->value.v) << p->name;
    }

    // manifest carries the step and normalized fusion weights
    std::ifstream mf(path + ".manifest");
    ASSERT_TRUE(mf.good());
    std::string text((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("step 1234"), std::string::npos);
    EXPECT_NE(text.find("stride 8"), std::string::npos);
    EXPECT_NE(text.find("fusion_score"), std::string::npos);

    std::filesystem::remove(path);
    std::filesystem::remove(path + ".manifest");
}

TEST(Model, OutputShapesDependOnlyOnInputShapes) {
    for (std::uint64_t seed : {1ull, 2ull}) {
        Model model(ModelConfig::reduced(), seed);
        const auto r = model.infer(random_image(63, seed), random_image(191, seed + 10));
        EXPECT_EQ(r.fused.score.shape, (std::vector<int>{1, 2, 17, 17}));
        EXPECT_EQ(r.fused.cen.shape, (std::vector<int>{1, 1, 17, 17}));
        EXPECT_EQ(r.fused.reg.shape, (std::vector<int>{1, 4, 17, 17}));
    }
}
