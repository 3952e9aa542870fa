#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bird/detection.hpp"
#include "bird/error.hpp"
#include "bird/loss.hpp"
#include "bird/model.hpp"
#include "bird/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace bird;
using doctest::Approx;

namespace {

ParamStore head_params(uint64_t seed, int ncls = 1) {
    ParamStore ps;
    SplitMix64 rng(seed);
    detection::define_head(ps, rng, ncls);
    return ps;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("head output shapes") {
    ParamStore ps = head_params(1);
    SplitMix64 rng(2);
    Graph g;
    const NodeId fused = g.constant(oracle::randn(rng, {64, 8, 8}, 0.2));
    const detection::HeadNodes h = detection::head_forward(g, ps, fused);
    CHECK(g.val(h.reg).shape == std::vector<int>{4, 8, 8});
    CHECK(g.val(h.obj).shape == std::vector<int>{1, 8, 8});
    CHECK(g.val(h.cls).shape == std::vector<int>{1, 8, 8});

    ParamStore ps3 = head_params(1, 3);
    Graph g3;
    const detection::HeadNodes h3 =
        detection::head_forward(g3, ps3, g3.constant(oracle::randn(rng, {64, 4, 4}, 0.2)));
    CHECK(g3.val(h3.cls).shape == std::vector<int>{3, 4, 4});
}

TEST_CASE("zero-weight head emits zero logits; every sigmoid is one half") {
    ParamStore ps = head_params(3);
    for (auto& p : ps.all())
        for (double& v : p->value.v) v = 0.0;
    SplitMix64 rng(4);
    Graph g;
    const detection::HeadNodes h =
        detection::head_forward(g, ps, g.constant(oracle::randn(rng, {64, 8, 8}, 0.3)));
    for (double v : g.val(h.reg).v) CHECK(v == 0.0);
    for (double v : g.val(h.obj).v) CHECK(v == 0.0);
    for (double v : g.val(h.cls).v) CHECK(v == 0.0);

    // Decoding zero logits yields one stride-sized box per cell, each with
    // score sigmoid(0)*sigmoid(0) = 0.25, and none of them overlap.
    const auto dets =
        detection::decode(g.val(h.reg), g.val(h.obj), g.val(h.cls), 8, 0.1, 0.5, 64, 64);
    CHECK(dets.size() == 64);
    for (const Detection& d : dets) CHECK(d.score == Approx(0.25).epsilon(1e-12));
}

TEST_CASE("head matches the manual conv composition") {
    ParamStore ps = head_params(5);
    SplitMix64 rng(6);
    const Tensor x = oracle::randn(rng, {64, 6, 6}, 0.2);
    Graph g;
    const detection::HeadNodes h = detection::head_forward(g, ps, g.constant(x));

    auto conv = [&](const Tensor& in, const std::string& name) {
        return oracle::conv2d(in, ps.at(name + ".w").value, &ps.at(name + ".b").value, 1, 1);
    };
    const Tensor ro = oracle::relu(conv(x, "det.stem_ro"));
    const Tensor cl = oracle::relu(conv(x, "det.stem_cls"));
    CHECK(g.val(h.reg).max_abs_diff(conv(ro, "det.reg")) < 1e-9);
    CHECK(g.val(h.obj).max_abs_diff(conv(ro, "det.obj")) < 1e-9);
    CHECK(g.val(h.cls).max_abs_diff(conv(cl, "det.cls")) < 1e-9);
}

TEST_CASE("decode: single hot cell maps to the expected box") {
    Tensor reg({4, 8, 8});
    Tensor obj = Tensor::full({1, 8, 8}, -40.0);
    Tensor cls({1, 8, 8});
    obj.v[3 * 8 + 2] = 3.0;  // grid row 3, column 2

    const auto dets = detection::decode(reg, obj, cls, 8, 0.05, 0.5, 64, 64);
    REQUIRE(dets.size() == 1);
    const Detection& d = dets[0];
    CHECK(d.box.cx() == Approx(20.0));  // (2 + 0.5) * 8
    CHECK(d.box.cy() == Approx(28.0));  // (3 + 0.5) * 8
    CHECK(d.box.x1 == Approx(16.0));
    CHECK(d.box.y1 == Approx(24.0));
    CHECK(d.box.x2 == Approx(24.0));
    CHECK(d.box.y2 == Approx(32.0));
    CHECK(d.score == Approx(sig(3.0) * 0.5));
    CHECK(d.class_id == 0);
}

TEST_CASE("decode: nothing above threshold gives an empty list") {
    Tensor reg({4, 4, 4});
    const Tensor obj = Tensor::full({1, 4, 4}, -40.0);
    Tensor cls({1, 4, 4});
    CHECK(detection::decode(reg, obj, cls, 8, 0.05, 0.5, 32, 32).empty());
}

TEST_CASE("decode: NMS keeps the higher-scoring of two identical boxes") {
    Tensor reg({4, 2, 2});
    Tensor obj = Tensor::full({1, 2, 2}, -40.0);
    Tensor cls({1, 2, 2});
    // Cells (gy=0,gx=0) and (gy=0,gx=1) decode to the same box centered at
    // x = 8: (0 + 0.5 + 0.5) * 8 = (1 + 0.5 - 0.5) * 8.
    reg.v[0 * 4 + 0] = 0.5;   // tx at (0,0)
    reg.v[0 * 4 + 1] = -0.5;  // tx at (0,1)
    obj.v[0] = 1.0;
    obj.v[1] = 2.0;

    const auto dets = detection::decode(reg, obj, cls, 8, 0.05, 0.5, 16, 16);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score == Approx(sig(2.0) * 0.5));
    CHECK(dets[0].box.cx() == Approx(8.0));
}

TEST_CASE("decode output is sorted, mutually non-overlapping past the NMS threshold") {
    SplitMix64 rng(7);
    const Tensor reg = oracle::randn(rng, {4, 6, 6}, 0.4);
    const Tensor obj = oracle::randn(rng, {1, 6, 6}, 2.0);
    const Tensor cls = oracle::randn(rng, {1, 6, 6}, 2.0);
    const auto dets = detection::decode(reg, obj, cls, 8, 0.05, 0.5, 48, 48);
    REQUIRE(!dets.empty());
    for (size_t i = 0; i + 1 < dets.size(); ++i) CHECK(dets[i].score >= dets[i + 1].score);
    // Greedy suppression leaves no kept pair above the IoU threshold, so
    // running NMS again would change nothing.
    for (size_t i = 0; i < dets.size(); ++i)
        for (size_t j = i + 1; j < dets.size(); ++j)
            CHECK(iou(dets[i].box, dets[j].box) <= 0.5);
}

TEST_CASE("decode drops boxes clipped to nothing") {
    Tensor reg({4, 2, 2});
    Tensor obj = Tensor::full({1, 2, 2}, -40.0);
    Tensor cls({1, 2, 2});
    obj.v[0] = 5.0;
    reg.v[0] = -10.0;  // cx = (0.5 - 10) * 8 = -76: entirely left of the frame
    CHECK(detection::decode(reg, obj, cls, 8, 0.05, 0.5, 16, 16).empty());
}

TEST_CASE("assign_targets places each GT center in one cell") {
    // Center (20, 28) with stride 8 lands in grid column 2, row 3.
    const std::vector<Box> gts = {{16, 24, 24, 32}};
    const detection::Assignment a = detection::assign_targets(gts, 8, 8, 8, 64, 64);
    REQUIRE(a.cells.size() == 1);
    CHECK(a.cells[0] == std::pair<int, int>{3, 2});
    CHECK(a.cell_gt[3 * 8 + 2] == 0);
    CHECK(a.missed.empty());
    int assigned = 0;
    for (int c : a.cell_gt) assigned += (c >= 0);
    CHECK(assigned == 1);
}

TEST_CASE("assign_targets: same-cell collision keeps the lower index") {
    const std::vector<Box> gts = {{16, 24, 24, 32}, {17, 25, 23, 31}};
    const detection::Assignment a = detection::assign_targets(gts, 8, 8, 8, 64, 64);
    CHECK(a.cells[0] == std::pair<int, int>{3, 2});
    CHECK(a.cells[1] == std::pair<int, int>{-1, -1});
    REQUIRE(a.missed.size() == 1);
    CHECK(a.missed[0] == 1);
}

TEST_CASE("assign_targets: centers on the far edge clamp to the last cell") {
    const std::vector<Box> gts = {{56, 56, 64, 64}};  // center (60, 60)
    const detection::Assignment a = detection::assign_targets(gts, 8, 8, 8, 64, 64);
    CHECK(a.cells[0] == std::pair<int, int>{7, 7});
}

TEST_CASE("assign_targets rejects out-of-frame and inverted boxes") {
    CHECK_THROWS_AS(detection::assign_targets({{-1, 0, 8, 8}}, 8, 8, 8, 64, 64), InputError);
    CHECK_THROWS_AS(detection::assign_targets({{0, 0, 65, 8}}, 8, 8, 8, 64, 64), InputError);
    CHECK_THROWS_WITH_AS(detection::assign_targets({{10, 10, 10, 18}}, 8, 8, 8, 64, 64),
                         doctest::Contains("64x64"), InputError);
}

TEST_CASE("detection_loss: exact prediction zeroes the regression term") {
    Graph g;
    detection::HeadNodes h;
    h.reg = g.constant(Tensor({4, 8, 8}));  // tx=ty=tw=th=0 decodes cell (3,2) to the GT
    h.obj = g.constant(Tensor({1, 8, 8}));
    h.cls = g.constant(Tensor({1, 8, 8}));
    const std::vector<Box> gts = {{16, 24, 24, 32}};
    const detection::FrameLoss fl = detection::detection_loss(g, h, gts, 8, 64, 64, 5.0);
    CHECK(fl.positives == 1);
    CHECK(g.val(fl.l_reg).v[0] == 0.0);
    CHECK(g.val(fl.l_cls).v[0] == Approx(std::log(2.0)));  // BCE at logit 0
}

TEST_CASE("detection_loss saturates to lambda * (1 - IoU) for a perfect classifier") {
    // One positive with IoU exactly 0.5 (prediction shifted by tx = 1/3),
    // objectness and class logits pushed to saturation: L_D -> 5 * 0.5.
    Graph g;
    Tensor reg({4, 8, 8});
    reg.v[(0 * 8 + 3) * 8 + 2] = 1.0 / 3.0;
    Tensor obj = Tensor::full({1, 8, 8}, -40.0);
    obj.v[3 * 8 + 2] = 40.0;
    const Tensor cls = Tensor::full({1, 8, 8}, 40.0);
    detection::HeadNodes h{g.constant(reg), g.constant(obj), g.constant(cls)};
    const detection::FrameLoss fl =
        detection::detection_loss(g, h, {{16, 24, 24, 32}}, 8, 64, 64, 5.0);
    CHECK(g.val(fl.l_reg).v[0] == Approx(0.5).epsilon(1e-9));
    CHECK(g.val(fl.l_d).v[0] == Approx(2.5).epsilon(1e-6));
}

TEST_CASE("detection_loss with no ground truth penalizes only objectness") {
    Graph g;
    detection::HeadNodes h{g.constant(Tensor({4, 8, 8})),
                           g.constant(Tensor::full({1, 8, 8}, -40.0)),
                           g.constant(Tensor({1, 8, 8}))};
    const detection::FrameLoss fl = detection::detection_loss(g, h, {}, 8, 64, 64, 5.0);
    CHECK(fl.positives == 0);
    CHECK(g.val(fl.l_reg).v[0] == 0.0);
    CHECK(g.val(fl.l_cls).v[0] == 0.0);
    CHECK(g.val(fl.l_d).v[0] < 1e-6);  // sigmoid(-40) is as good as zero
}

TEST_CASE("detection_loss is invariant to the ground-truth order") {
    SplitMix64 rng(8);
    const Tensor reg = oracle::randn(rng, {4, 8, 8}, 0.2);
    const Tensor obj = oracle::randn(rng, {1, 8, 8}, 1.0);
    const Tensor cls = oracle::randn(rng, {1, 8, 8}, 1.0);
    const std::vector<Box> ab = {{16, 24, 24, 32}, {40, 8, 50, 20}};
    const std::vector<Box> ba = {ab[1], ab[0]};

    Graph g1;
    detection::HeadNodes h1{g1.constant(reg), g1.constant(obj), g1.constant(cls)};
    const double v1 = g1.val(detection::detection_loss(g1, h1, ab, 8, 64, 64, 5.0).l_d).v[0];
    Graph g2;
    detection::HeadNodes h2{g2.constant(reg), g2.constant(obj), g2.constant(cls)};
    const double v2 = g2.val(detection::detection_loss(g2, h2, ba, 8, 64, 64, 5.0).l_d).v[0];
    CHECK(v1 == Approx(v2).epsilon(1e-14));
}

TEST_CASE("grad: detection_loss against finite differences") {
    for (uint64_t seed = 30; seed < 35; ++seed) {
        SplitMix64 rng(seed);
        // Ground truths centered in distinct cells with generic geometry.
        std::vector<Box> gts;
        for (int j = 0; j < 2; ++j) {
            const double cx = (2 * j + 1.5) * 8 + rng.uniform(-2.5, 2.5);
            const double cy = (j + 1.5) * 8 + rng.uniform(-2.5, 2.5);
            const double w = rng.uniform(6.0, 13.0), hh = rng.uniform(6.0, 13.0);
            gts.push_back({cx - w / 2, cy - hh / 2, cx + w / 2, cy + hh / 2});
        }
        std::vector<Tensor> in = {oracle::randn(rng, {4, 4, 4}, 0.2),
                                  oracle::randn(rng, {1, 4, 4}, 0.7),
                                  oracle::randn(rng, {1, 4, 4}, 0.7)};
        const double worst = birdtest::gradcheck(
            in,
            [&](Graph& g, const auto& nodes) {
                detection::HeadNodes h{nodes[0], nodes[1], nodes[2]};
                return detection::detection_loss(g, h, gts, 8, 40, 40, 5.0).l_d;
            },
            /*max_coords=*/6, /*coord_seed=*/seed);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("temporal alignment term: unit example and oracle") {
    Graph g;
    const NodeId zero = g.constant(Tensor({64, 2, 2}));
    const NodeId ones = g.constant(Tensor::full({64, 2, 2}, 1.0));
    CHECK(g.val(ops::l1_loss(g, zero, ones)).v[0] == 1.0);

    SplitMix64 rng(9);
    const Tensor a = oracle::randn(rng, {8, 3, 3});
    const Tensor b = oracle::randn(rng, {8, 3, 3});
    double want = 0.0;
    for (int i = 0; i < a.numel(); ++i) want += std::fabs(a.v[i] - b.v[i]);
    want /= a.numel();
    CHECK(g.val(ops::l1_loss(g, g.constant(a), g.constant(b))).v[0] == Approx(want));
}

TEST_CASE("total loss arithmetic over a five-frame clip") {
    const std::vector<double> det = {1, 2, 3, 4, 5};
    const std::vector<double> stf = {0.1, 0.2, 0.3, 0.4, 0.5};
    CHECK(total_loss_value(det, stf, 1.0) == Approx(16.5).epsilon(1e-12));
    CHECK(total_loss_value(det, stf, 0.0) == Approx(15.0).epsilon(1e-12));
    CHECK(total_loss_value(det, {}, 1.0) == Approx(15.0).epsilon(1e-12));
}

TEST_CASE("clip_loss sums detection and alignment terms over non-padded frames") {
    BirdModel model(40);
    const int hw = 16;
    SplitMix64 rng(10);
    std::vector<Tensor> frames = {oracle::rand_uniform(rng, {1, hw, hw}, 0.0, 1.0),
                                  oracle::rand_uniform(rng, {1, hw, hw}, 0.0, 1.0)};
    const ClipBatch clip = pad_clip(frames, 3);
    const std::vector<std::vector<Box>> gt = {{{4, 4, 11, 11}}, {{5, 5, 12, 12}}};

    Graph g;
    const ClipFeatures cf = model.forward_clip(g, clip);
    const LossConfig lc;
    const ClipLoss cl = clip_loss(g, model, cf, gt, clip.original_length, hw, hw, lc);

    REQUIRE(cl.frames.size() == 2);  // the padded frame carries no loss
    double want = 0.0;
    for (const FrameLossReport& fr : cl.frames) {
        CHECK(fr.stf != -1);
        want += fr.det_value + lc.eta * fr.stf_value;
    }
    CHECK(cl.total_value == Approx(want).epsilon(1e-12));
    CHECK(cl.det_sum > 0.0);
    CHECK(cl.stf_sum > 0.0);

    // The clip objective must reach every real frame.
    g.backward(cl.total);
    for (int i = 0; i < 2; ++i) {
        double mx = 0.0;
        for (double v : g.grad(cf.frames[i]).v) mx = std::max(mx, std::fabs(v));
        CHECK(mx > 1e-12);
    }
}

TEST_CASE("clip_loss: alignment can be disabled and validates its inputs") {
    BirdModel model(41);
    SplitMix64 rng(11);
    const ClipBatch clip = pad_clip({oracle::rand_uniform(rng, {1, 16, 16}, 0.0, 1.0)}, 2);
    const std::vector<std::vector<Box>> gt = {{{4, 4, 11, 11}}};

    Graph g;
    const ClipFeatures cf = model.forward_clip(g, clip);
    LossConfig lc;
    lc.enable_stf = false;
    const ClipLoss cl = clip_loss(g, model, cf, gt, clip.original_length, 16, 16, lc);
    CHECK(cl.frames[0].stf == -1);
    CHECK(cl.stf_sum == 0.0);
    CHECK(cl.total_value == Approx(cl.det_sum).epsilon(1e-12));

    CHECK_THROWS_AS(clip_loss(g, model, cf, {}, 1, 16, 16, LossConfig{}), InputError);
    CHECK_THROWS_AS(clip_loss(g, model, cf, gt, 5, 16, 16, LossConfig{}), InputError);
}

TEST_CASE("clip_loss: forward branch aligns to the features it consumed") {
    ModelConfig cfg;
    cfg.enable_bp = false;  // forward branch now runs off the extracted features
    BirdModel model(42, cfg);
    SplitMix64 rng(12);
    const ClipBatch clip = pad_clip({oracle::rand_uniform(rng, {1, 16, 16}, 0.0, 1.0)}, 1);
    Graph g;
    const ClipFeatures cf = model.forward_clip(g, clip);
    const ClipLoss cl =
        clip_loss(g, model, cf, {{{4, 4, 11, 11}}}, 1, 16, 16, LossConfig{});
    const NodeId want = ops::l1_loss(g, cf.extracted[0], cf.local_forward[0]);
    CHECK(cl.frames[0].stf_value == Approx(g.val(want).v[0]).epsilon(1e-14));
}
