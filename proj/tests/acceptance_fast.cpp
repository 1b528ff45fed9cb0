// Acceptance suite, fast half: the formula examples, the oracle-equivalence
// sweeps, the finite-difference gradient checks, the contrastive-dynamics
// toy run, and the post-processing invariants. One PASS line per criterion.

#include <gtest/gtest.h>

#include <chrono>

#include "aftrack/data.hpp"
#include "aftrack/harness.hpp"
#include "aftrack/hne.hpp"
#include "aftrack/tracker.hpp"
#include "gradcheck.hpp"

using namespace aftrack;
using nn::Tape;
using nn::Var;

namespace {

constexpr Real kTol = 1e-6;

void report(int criterion, const char* what) {
    if (!::testing::Test::HasFailure())
        std::printf("[CRITERION %d] PASS  %s\n", criterion, what);
    else
        std::printf("[CRITERION %d] FAIL  %s\n", criterion, what);
}

Real raster_iou(const Box& a, const Box& b, int canvas) {
    long inter = 0, in_a = 0, in_b = 0;
    for (int j = 0; j < canvas; ++j)
        for (int i = 0; i < canvas; ++i) {
            const bool pa = i >= a.x0 && i < a.x1 && j >= a.y0 && j < a.y1;
            const bool pb = i >= b.x0 && i < b.x1 && j >= b.y0 && j < b.y1;
            in_a += pa;
            in_b += pb;
            inter += pa && pb;
        }
    const long uni = in_a + in_b - inter;
    return (in_a == 0 || in_b == 0 || uni == 0) ? 0 : static_cast<Real>(inter) / uni;
}

} // namespace

// ---------------------------------------------------------------- criterion 1

TEST(Criterion1, FormulaSuite) {
    const auto t0 = std::chrono::steady_clock::now();

    // geometry
    EXPECT_NEAR(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0, kTol);
    EXPECT_NEAR(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0, kTol);
    EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}),
                raster_iou({0, 0, 10, 10}, {5, 0, 15, 10}, 16), 1e-9);
    EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0, kTol);

    {
        const auto kept = nms({{0, 0, 10, 10}}, {0.4}, 0.5);
        EXPECT_EQ(kept, std::vector<int>{0});
        const auto both = nms({{0, 0, 10, 10}, {30, 30, 40, 40}}, {0.9, 0.8}, 0.5);
        EXPECT_EQ(both.size(), 2u);
        const Box a{0, 0, 9, 10}, b{1, 0, 10, 10}; // IoU 0.8
        EXPECT_NEAR(iou(a, b), 0.8, kTol);
        const auto only_a = nms({a, b}, {0.9, 0.7}, 0.7);
        EXPECT_EQ(only_a, std::vector<int>{0});
        EXPECT_TRUE(nms({}, {}, 0.5).empty());
    }

    EXPECT_EQ(*encode_targets({100, 100}, {90, 80, 130, 140}), (LTRB{10, 20, 30, 40}));
    EXPECT_EQ(*encode_targets({10, 10}, {0, 0, 20, 20}), (LTRB{10, 10, 10, 10}));
    EXPECT_FALSE(encode_targets({30, 10}, {0, 0, 20, 20}).has_value());
    EXPECT_EQ(decode_box({100, 100}, {10, 20, 30, 40}), (Box{90, 80, 130, 140}));
    EXPECT_EQ(decode_box({4, 4}, {4, 4, 4, 4}), (Box{0, 0, 8, 8}));
    {
        Rng rng(99);
        for (int t = 0; t < 100; ++t) {
            const Real gx0 = std::floor(rng.uniform(0, 40)), gy0 = std::floor(rng.uniform(0, 40));
            const Box g{gx0, gy0, gx0 + std::floor(rng.uniform(4, 50)),
                        gy0 + std::floor(rng.uniform(4, 50))};
            const Point p{std::floor(rng.uniform(g.x0 + 1, g.x1)),
                          std::floor(rng.uniform(g.y0 + 1, g.y1))};
            EXPECT_EQ(decode_box(p, *encode_targets(p, g)), g); // exact roundtrip
        }
    }
    EXPECT_NEAR(centerness({5, 5, 5, 5}), 1.0, kTol);
    EXPECT_NEAR(centerness({1, 1, 4, 4}), 0.25, kTol);
    EXPECT_NEAR(centerness({0, 3, 3, 3}), 0.0, kTol);

    // assignment
    const GridSpec grid(8, 25, 25, 255);
    EXPECT_EQ(grid_to_image(0, 0, grid).x, 4.0);
    EXPECT_EQ(grid_to_image(10, 5, grid).x, 84.0);
    EXPECT_EQ(grid_to_image(10, 5, grid).y, 44.0);
    for (int g = 0; g < 25; ++g) EXPECT_LT(4 + 8 * g, 255);
    EXPECT_EQ(assign_labels({0, 0, 255, 255}, grid).positives, 625);
    EXPECT_EQ(assign_labels({5, 5, 11, 11}, grid).positives, 0);

    // losses
    {
        Tensor logits({1, 2, 1, 1});
        Tensor labels({1, 1, 1, 1}, 1.0);
        Tape tape(false);
        EXPECT_NEAR(losses::focal_loss(tape, tape.constant(logits), labels, 0.25, 2.0)->val.v[0],
                    0.25 * 0.25 * std::log(2.0), kTol);

        Tensor confident({1, 2, 2, 2});
        Tensor neg_labels({1, 1, 2, 2}, 0.0);
        for (int i = 0; i < 4; ++i) confident.v[i] = 20.0; // background channel certain
        EXPECT_NEAR(losses::focal_loss(tape, tape.constant(confident), neg_labels)->val.v[0], 0.0,
                    kTol);

        // gamma = 0, balanced alpha: weighted cross entropy
        Rng rng(7);
        const Tensor z = Tensor::randn({1, 2, 4, 4}, rng, 2.0);
        Tensor y({1, 1, 4, 4});
        for (auto& v : y.v) v = rng.uniform() < 0.5;
        Real ce = 0;
        for (int i = 0; i < 16; ++i) {
            const Real p1 = 1.0 / (1.0 + std::exp(z.v[i] - z.v[16 + i]));
            ce += -std::log(y.v[i] > 0.5 ? p1 : 1 - p1);
        }
        EXPECT_NEAR(losses::focal_loss(tape, tape.constant(z), y, 0.5, 0.0)->val.v[0],
                    0.5 * ce / 16, kTol);
    }
    {
        Tensor pred({1, 1, 2, 2}), target({1, 1, 2, 2}), mask({1, 1, 2, 2}, 1.0);
        pred.v = {0, 1, 1, 0};
        target.v = {0, 1, 1, 0};
        EXPECT_NEAR(losses::centerness_bce(pred, target, mask), 0.0, kTol);
        Tensor half({1, 1, 2, 2}, 0.5);
        EXPECT_NEAR(losses::centerness_bce(half, half, mask), std::log(2.0), kTol);
        Tensor empty_mask({1, 1, 2, 2}, 0.0);
        EXPECT_EQ(losses::centerness_bce(pred, target, empty_mask), 0.0);
    }
    {
        Tape tape(false);
        Tensor ltrb({1, 4, 1, 1});
        ltrb.v = {7, 5, 3, 5};
        Tensor target({1, 4, 1, 1});
        target.v = {2, 5, 8, 5};
        const Tensor mask({1, 1, 1, 1}, 1.0);
        EXPECT_NEAR(losses::iou_loss(tape, tape.constant(ltrb), ltrb, mask)->val.v[0], 0.0, kTol);
        EXPECT_NEAR(losses::iou_loss(tape, tape.constant(ltrb), target, mask)->val.v[0],
                    -std::log(1.0 / 3.0), kTol);
    }
    EXPECT_NEAR(contrastive_loss({{0.0}, {1}, 2.0}), 0.0, kTol);
    EXPECT_NEAR(contrastive_loss({{3.0}, {0}, 2.0}), 0.0, kTol);
    EXPECT_NEAR(contrastive_loss({{1.0}, {0}, 2.0}), 1.0, kTol);
    EXPECT_NEAR(contrastive_loss({{2.0}, {1}, 2.0}), 4.0, kTol);
    EXPECT_NEAR(total_loss(1, 1, 1, 1, LossWeights{}), 3.1, kTol);
    EXPECT_EQ(total_loss(0, 0, 0, 0, LossWeights{}), 0.0);
    {
        LossWeights ablated;
        ablated.contrastive = 0;
        EXPECT_EQ(total_loss(0.5, 0.25, 0.25, 123.0, ablated), 1.0);
    }

    // model shape contracts (default geometry)
    {
        Model model(ModelConfig{}, 5);
        Rng rng(5);
        Tensor z({1, 3, 127, 127}), x({1, 3, 255, 255});
        for (auto& v : z.v) v = rng.uniform() - 0.5;
        for (auto& v : x.v) v = rng.uniform() - 0.5;
        const auto zf = model.extract_features(z);
        for (const auto& lvl : zf.levels) EXPECT_EQ(lvl.shape, (std::vector<int>{1, 64, 15, 15}));
        const auto xf = model.extract_features(x);
        for (const auto& lvl : xf.levels) EXPECT_EQ(lvl.shape, (std::vector<int>{1, 64, 31, 31}));
        const auto r1 = model.infer_cached(zf, x);
        EXPECT_EQ(r1.fused.score.shape, (std::vector<int>{1, 2, 25, 25}));
        EXPECT_EQ(r1.fused.cen.shape, (std::vector<int>{1, 1, 25, 25}));
        EXPECT_EQ(r1.fused.reg.shape, (std::vector<int>{1, 4, 25, 25}));
        for (Real v : r1.fused.reg.v) EXPECT_GT(v, 0.0);
        const auto r2 = model.infer_cached(zf, x);
        EXPECT_EQ(r1.fused.score.v, r2.fused.score.v); // determinism

        // correlation contracts
        Tape tape(false);
        Tensor zk({1, 1, 1, 1}, 2.0), xm({1, 1, 3, 3}, 3.0);
        Var c = tape.dw_xcorr(tape.constant(zk), tape.constant(xm));
        for (Real v : c->val.v) EXPECT_EQ(v, 6.0);
        Tensor z7 = Tensor::randn({1, 4, 7, 7}, rng);
        Tensor x31 = Tensor::randn({1, 4, 31, 31}, rng);
        EXPECT_EQ(tape.dw_xcorr(tape.constant(z7), tape.constant(x31))->val.shape,
                  (std::vector<int>{1, 4, 25, 25}));
        Tensor delta({1, 1, 3, 3});
        delta.at(0, 0, 2, 1) = 1.0;
        Tensor map = Tensor::randn({1, 1, 6, 6}, rng);
        Var shifted = tape.dw_xcorr(tape.constant(delta), tape.constant(map));
        for (int y = 0; y < 4; ++y)
            for (int xx = 0; xx < 4; ++xx)
                EXPECT_EQ(shifted->val.at(0, 0, y, xx), map.at(0, 0, y + 2, xx + 1));
    }
    {
        Rng rng(11);
        std::array<HeadOutput, 3> heads;
        for (auto& h : heads) {
            h.score = Tensor::randn({1, 2, 5, 5}, rng);
            h.cen = Tensor::randn({1, 1, 5, 5}, rng);
            h.reg = Tensor::randn({1, 4, 5, 5}, rng);
        }
        const HeadOutput one_hot = fuse(heads, {0, 0, 1}, {0, 0, 1}, {0, 0, 1});
        EXPECT_EQ(one_hot.score.v, heads[2].score.v);
        const std::array<Real, 3> w{0.25, 0.35, 0.4};
        const HeadOutput same = fuse({heads[0], heads[0], heads[0]}, w, w, w);
        for (size_t i = 0; i < same.score.v.size(); ++i)
            EXPECT_NEAR(same.score.v[i], heads[0].score.v[i], kTol);
        const HeadOutput mixed = fuse(heads, w, w, w);
        for (size_t i = 0; i < mixed.reg.v.size(); ++i)
            EXPECT_NEAR(mixed.reg.v[i],
                        0.25 * heads[0].reg.v[i] + 0.35 * heads[1].reg.v[i] +
                            0.4 * heads[2].reg.v[i],
                        kTol);
    }

    // hard negative emphasis
    {
        const GridSpec spec9(8, 9, 9, 127);
        std::vector<Real> score(81, 0.01), reg(4 * 81, 10.0);
        score[4 * 9 + 5] = 0.99;
        const auto top1 = hne::select_candidates(score, reg, spec9, 1, 0.7);
        ASSERT_EQ(top1.size(), 1u);
        EXPECT_EQ(top1[0], decode_box({44, 36}, {10, 10, 10, 10}));

        std::vector<Real> flat(81, 0.5), small(4 * 81, 3.0);
        EXPECT_EQ(hne::select_candidates(flat, small, spec9, 6, 0.7).size(), 6u);

        const Box gt{50, 50, 100, 100};
        const Box half{50, 50, 100, 75};
        const auto [pos, neg] =
            hne::classify_candidates({gt, {0, 0, 20, 20}, half}, gt, 0.8, 0.3);
        EXPECT_EQ(pos.size(), 1u);
        EXPECT_EQ(neg.size(), 1u);

        Rng rng(13);
        const auto copies = hne::random_shift_positives(gt, 4, 1.0, rng);
        for (const Box& b : copies) EXPECT_EQ(b, gt);
        const auto shifts = hne::random_shift_positives(gt, 100, 0.8, rng);
        for (const Box& b : shifts) EXPECT_GT(iou(b, gt), 0.8);
        Rng r1(17), r2(17);
        EXPECT_EQ(hne::random_shift_positives(gt, 5, 0.8, r1)[3],
                  hne::random_shift_positives(gt, 5, 0.8, r2)[3]);

        // default RoI budget: 5 positives + 5 hard negatives + the gt = 11
        hne::HneConfig hcfg;
        EXPECT_EQ(2 * hcfg.k + 1, 11);
    }

    // tracker formulas
    EXPECT_NEAR(scale_size(10, 10), 20.0, kTol);
    EXPECT_NEAR(scale_size(40, 20), 59.16079783099616, kTol);
    EXPECT_EQ(scale_size(40, 20), scale_size(20, 40));
    {
        TrackerState st;
        st.prev_ratio = 1.25;
        st.prev_scale = 77.0;
        st.params.penalty_k = 0.04;
        EXPECT_NEAR(scale_penalty(1.25, 77.0, st), 1.0, kTol);
        st.params.penalty_k = 0.0;
        EXPECT_NEAR(scale_penalty(3.0, 10.0, st), 1.0, kTol);
    }

    // data module
    {
        data::SceneConfig scene;
        scene.distractors = 0;
        const data::Sequence seq(scene, 42);
        for (const auto& d : seq.distractor_annotations()) EXPECT_TRUE(d.empty());
        const data::Sequence again(scene, 42);
        EXPECT_EQ(seq.frame(3).v, again.frame(3).v);
        for (const Box& b : seq.annotations()) {
            EXPECT_GE(b.x0, 0);
            EXPECT_LE(b.x1, scene.frame_width);
        }
        data::PairConfig pc;
        pc.shift = 0;
        pc.scale_jitter = 0;
        Rng rng(3);
        const auto centered = data::make_training_pair(seq, 0, 2, pc, rng);
        EXPECT_NEAR(centered.gt.center().x, 127.5, kTol);
        EXPECT_EQ(centered.exemplar.width, 127);
        EXPECT_EQ(centered.instance.width, 255);
        data::PairConfig full;
        for (int t = 0; t < 1000; ++t) {
            const auto p = data::make_training_pair(seq, rng.uniform_int(seq.length()),
                                                    rng.uniform_int(seq.length()), full, rng);
            EXPECT_LE(std::abs(p.gt.center().x - 127.5), 64.0 + 1e-9);
            EXPECT_LE(std::abs(p.gt.center().y - 127.5), 64.0 + 1e-9);
        }
    }

    // metric arithmetic
    {
        EvalReport r;
        r.iou_traces = {{0.6, 0.4}};
        r.finalize();
        EXPECT_EQ(r.ao, 0.5);
        EXPECT_EQ(r.sr050, 0.5);
        EXPECT_EQ(r.sr075, 0.0);
        EvalReport perfect;
        perfect.iou_traces = {{1, 1, 1}};
        perfect.finalize();
        EXPECT_EQ(perfect.ao, 1.0);
        EXPECT_EQ(perfect.sr050, 1.0);
        EXPECT_EQ(perfect.sr075, 1.0);
        EvalReport miss;
        miss.iou_traces = {{0.0, 0.0}};
        miss.finalize();
        EXPECT_EQ(miss.ao, 0.0);
    }

    const Real elapsed =
        std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(elapsed, 60.0);
    std::printf("formula suite runtime: %.1f s\n", elapsed);
    report(1, "formula suite (TRIVIAL/PAPER exact, DERIVED vs oracles)");
}

// ---------------------------------------------------------------- criterion 2

TEST(Criterion2, OracleEquivalence) {
    // IoU vs rasterized counting: every pair of integer boxes on a 16x16
    // canvas, via 256-bit coverage masks.
    struct MaskBox {
        Box box;
        std::uint64_t mask[4];
        int area;
    };
    std::vector<MaskBox> boxes;
    for (int x0 = 0; x0 <= 16; ++x0)
        for (int x1 = x0 + 1; x1 <= 16; ++x1)
            for (int y0 = 0; y0 <= 16; ++y0)
                for (int y1 = y0 + 1; y1 <= 16; ++y1) {
                    MaskBox mb{};
                    mb.box = {static_cast<Real>(x0), static_cast<Real>(y0),
                              static_cast<Real>(x1), static_cast<Real>(y1)};
                    for (int j = y0; j < y1; ++j)
                        for (int i = x0; i < x1; ++i) {
                            const int bit = j * 16 + i;
                            mb.mask[bit >> 6] |= 1ull << (bit & 63);
                        }
                    mb.area = (x1 - x0) * (y1 - y0);
                    boxes.push_back(mb);
                }
    std::int64_t mismatches = 0;
    for (size_t a = 0; a < boxes.size(); ++a) {
        for (size_t b = a; b < boxes.size(); ++b) {
            int inter = 0;
            for (int w = 0; w < 4; ++w)
                inter += __builtin_popcountll(boxes[a].mask[w] & boxes[b].mask[w]);
            const int uni = boxes[a].area + boxes[b].area - inter;
            const Real oracle = uni == 0 ? 0 : static_cast<Real>(inter) / uni;
            if (std::abs(iou(boxes[a].box, boxes[b].box) - oracle) > 1e-9) ++mismatches;
        }
    }
    EXPECT_EQ(mismatches, 0);
    std::printf("iou raster sweep: %zu boxes, %.0f pairs, %lld mismatches\n", boxes.size(),
                static_cast<double>(boxes.size()) * (boxes.size() + 1) / 2,
                static_cast<long long>(mismatches));

    // NMS vs exhaustive reference, 1000 random instances of up to 6 boxes
    Rng rng(123);
    std::int64_t nms_mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = rng.uniform_int(7);
        std::vector<Box> bs;
        std::vector<Real> ss;
        for (int i = 0; i < n; ++i) {
            bs.push_back(Box::from_center(rng.uniform(5, 25), rng.uniform(5, 25),
                                          rng.uniform(2, 18), rng.uniform(2, 18)));
            ss.push_back(rng.uniform());
        }
        const Real thr = rng.uniform(0.1, 0.9);
        // reference: independent marking pass
        std::vector<char> alive(static_cast<size_t>(n), 1), taken(static_cast<size_t>(n), 0);
        std::vector<int> want;
        for (;;) {
            int best = -1;
            for (int i = 0; i < n; ++i)
                if (alive[static_cast<size_t>(i)] && !taken[static_cast<size_t>(i)] &&
                    (best < 0 || ss[static_cast<size_t>(i)] > ss[static_cast<size_t>(best)]))
                    best = i;
            if (best < 0) break;
            taken[static_cast<size_t>(best)] = 1;
            want.push_back(best);
            for (int i = 0; i < n; ++i)
                if (i != best && alive[static_cast<size_t>(i)] &&
                    iou(bs[static_cast<size_t>(best)], bs[static_cast<size_t>(i)]) > thr)
                    alive[static_cast<size_t>(i)] = 0;
        }
        if (nms(bs, ss, thr) != want) ++nms_mismatches;
    }
    EXPECT_EQ(nms_mismatches, 0);

    // label assignment vs brute-force point-in-box, 200 random boxes
    const GridSpec grid(8, 25, 25, 255);
    Rng arng(99);
    std::int64_t assign_mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Real w = arng.uniform(4, 120), h = arng.uniform(4, 120);
        const Box gt = Box::from_center(arng.uniform(w / 2 + 1, 255 - w / 2 - 1),
                                        arng.uniform(h / 2 + 1, 255 - h / 2 - 1), w, h);
        const LabelMaps maps = assign_labels(gt, grid);
        int count = 0;
        for (int y = 0; y < 25; ++y)
            for (int x = 0; x < 25; ++x) {
                const Real px = 4 + 8 * x, py = 4 + 8 * y;
                const bool inside = px > gt.x0 && px < gt.x1 && py > gt.y0 && py < gt.y1;
                if (inside != (maps.cls[maps.at(x, y)] == 1)) ++assign_mismatches;
                count += inside;
            }
        if (count != maps.positives) ++assign_mismatches;
    }
    EXPECT_EQ(assign_mismatches, 0);
    report(2, "oracle equivalence (iou raster, nms reference, label assignment)");
}

// ---------------------------------------------------------------- criterion 3

TEST(Criterion3, GradientChecks) {
    constexpr Real kGradTol = 1e-4;
    constexpr Real kStep = 1e-3;
    Rng rng(2024);

    for (int point = 0; point < 20; ++point) { // iou_loss
        Tensor pred({1, 4, 2, 2}), target({1, 4, 2, 2}), mask({1, 1, 2, 2}, 1.0);
        for (int i = 0; i < 16; ++i) {
            pred.v[i] = rng.uniform(2, 30);
            target.v[i] = rng.uniform(2, 30);
            if (std::abs(pred.v[i] - target.v[i]) < 0.1) pred.v[i] += 0.5;
        }
        const auto f = [&](Tape& t, Var v) { return losses::iou_loss(t, v, target, mask); };
        EXPECT_LT(gradcheck::max_rel_grad_error(pred, f, kStep), kGradTol) << "iou point " << point;
    }
    for (int point = 0; point < 20; ++point) { // focal_loss
        const Tensor logits = Tensor::randn({1, 2, 3, 3}, rng, 1.5);
        Tensor labels({1, 1, 3, 3});
        for (auto& v : labels.v) v = rng.uniform() < 0.4;
        const auto f = [&](Tape& t, Var v) { return losses::focal_loss(t, v, labels); };
        EXPECT_LT(gradcheck::max_rel_grad_error(logits, f, kStep), kGradTol)
            << "focal point " << point;
    }
    for (int point = 0; point < 20; ++point) { // centerness_bce
        const Tensor logits = Tensor::randn({1, 1, 3, 3}, rng, 1.5);
        Tensor target({1, 1, 3, 3}), mask({1, 1, 3, 3});
        for (int i = 0; i < 9; ++i) {
            target.v[i] = rng.uniform();
            mask.v[i] = rng.uniform() < 0.7;
        }
        mask.v[0] = 1;
        const auto f = [&](Tape& t, Var v) {
            return losses::centerness_bce_logits(t, v, target, mask);
        };
        EXPECT_LT(gradcheck::max_rel_grad_error(logits, f, kStep), kGradTol)
            << "bce point " << point;
    }
    for (int point = 0; point < 20; ++point) { // contrastive_loss
        Tensor anchor({1, 6}), vecs({4, 6});
        for (auto& v : anchor.v) v = rng.normal();
        for (auto& v : vecs.v) v = rng.normal();
        losses::RoiGroup grp{0, {0, 1, 2, 3}, {1, 0, 1, 0}};
        const auto f = [&](Tape& t, Var v) {
            return losses::contrastive_embeddings(t, t.constant(anchor), v, {grp}, 2.0);
        };
        EXPECT_LT(gradcheck::max_rel_grad_error(vecs, f, kStep), kGradTol)
            << "contrastive point " << point;
    }
    report(3, "gradient checks vs central finite differences (4 losses x 20 points)");
}

// ---------------------------------------------------------------- criterion 4

TEST(Criterion4, ContrastiveDynamics) {
    // Fixed toy embedding problem optimized directly in vector space with
    // plain SGD on the contrastive objective, margin 2.
    const int dim = 8;
    const Real margin = 2.0;
    const Real lr = 0.05;
    Rng rng(715);

    std::vector<Real> anchor(dim, 0.0);
    std::vector<std::vector<Real>> pos(3), neg(3);
    for (auto& v : pos) { // positives start well off the anchor
        v.resize(dim);
        for (auto& x : v) x = rng.normal() * 0.8 + 1.0;
    }
    for (auto& v : neg) { // hard negatives start inside the margin
        v.resize(dim);
        for (auto& x : v) x = rng.normal() * 0.15;
    }
    const int n_total = 6;

    const auto dist = [&](const std::vector<Real>& v) {
        Real d2 = 0;
        for (int i = 0; i < dim; ++i) d2 += (v[i] - anchor[i]) * (v[i] - anchor[i]);
        return std::sqrt(d2);
    };
    const auto means = [&] {
        Real mp = 0, mn = 0;
        for (const auto& v : pos) mp += dist(v) / 3;
        for (const auto& v : neg) mn += dist(v) / 3;
        return std::pair<Real, Real>(mp, mn);
    };

    std::vector<Real> mean_pos, mean_neg;
    for (int step = 0; step <= 200; ++step) {
        const auto [mp, mn] = means();
        mean_pos.push_back(mp);
        mean_neg.push_back(mn);
        if (step == 200) break;
        // SGD on (1/N) sum [y d^2 + (1-y) max(0, m-d)^2]
        for (auto& v : pos)
            for (int i = 0; i < dim; ++i) v[i] -= lr * (2.0 / n_total) * (v[i] - anchor[i]);
        for (auto& v : neg) {
            const Real d = std::max(dist(v), 1e-9);
            if (d >= margin) continue;
            const Real coef = -(2.0 / n_total) * (margin - d) / d;
            for (int i = 0; i < dim; ++i) v[i] -= lr * coef * (v[i] - anchor[i]);
        }
    }

    ASSERT_LT(mean_neg[0], margin); // the push term starts engaged
    EXPECT_LT(mean_pos[200], mean_pos[0]);
    EXPECT_GT(mean_neg[200], mean_neg[0]);
    // monotone over every 10-step window: positives strictly down, negatives
    // strictly up until they reach the margin
    for (int t = 0; t + 10 <= 200; t += 10) {
        EXPECT_LT(mean_pos[static_cast<size_t>(t + 10)], mean_pos[static_cast<size_t>(t)])
            << "positive window at " << t;
        if (mean_neg[static_cast<size_t>(t)] < margin - 1e-9)
            EXPECT_GT(mean_neg[static_cast<size_t>(t + 10)], mean_neg[static_cast<size_t>(t)])
                << "negative window at " << t;
    }
    std::printf("contrastive dynamics: pos %.3f -> %.4f, neg %.3f -> %.3f (margin %.1f)\n",
                mean_pos[0], mean_pos[200], mean_neg[0], mean_neg[200], margin);
    report(4, "contrastive dynamics (200 SGD steps, monotone 10-step windows)");
}

// ---------------------------------------------------------------- criterion 7

TEST(Criterion7, PostProcessingInvariants) {
    // penalty == 1 at no change, for arbitrary states
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
        TrackerState st;
        st.prev_ratio = rng.uniform(0.3, 3.0);
        st.prev_scale = rng.uniform(5, 300);
        st.params.penalty_k = rng.uniform(0.0, 0.5);
        EXPECT_NEAR(scale_penalty(st.prev_ratio, st.prev_scale, st), 1.0, 1e-12);
    }

    // SR@0.75 <= SR@0.5 on random traces
    for (int t = 0; t < 200; ++t) {
        EvalReport r;
        std::vector<Real> trace;
        for (int i = 0; i < 40; ++i) trace.push_back(rng.uniform());
        r.iou_traces.push_back(std::move(trace));
        r.finalize();
        EXPECT_LE(r.sr075, r.sr050);
    }

    // argmax invariance under strictly increasing transforms
    for (int t = 0; t < 200; ++t) {
        std::vector<Real> score(17 * 17);
        for (auto& v : score) v = rng.uniform();
        const int base = argmax(score);
        std::vector<Real> mapped(score.size());
        for (size_t i = 0; i < score.size(); ++i) mapped[i] = std::exp(2.5 * score[i]) - 0.3;
        EXPECT_EQ(argmax(mapped), base);
        for (size_t i = 0; i < score.size(); ++i) mapped[i] = std::atan(score[i] * 7.0);
        EXPECT_EQ(argmax(mapped), base);
    }
    report(7, "post-processing invariants (penalty identity, SR ordering, argmax)");
}
