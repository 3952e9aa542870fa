#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bird/blocks.hpp"
#include "bird/error.hpp"
#include "bird/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace bird;
using birdtest::gradcheck;
using oracle::rand_uniform;
using oracle::randn;
using oracle::randn_away;

namespace {

constexpr double kGradTol = 1e-4;

// Offsets drawn from [-1,1] but nudged so no sampling position sits within
// 5e-3 of the integer lattice: the finite-difference probe (step 1e-4) must
// not cross a bilinear-interpolation kink.
Tensor safe_offsets(SplitMix64& rng, int groups, int k, int h, int w) {
    Tensor off({groups * 2 * k * k, h, w});
    const int pad = k / 2;
    size_t idx = 0;
    for (int g = 0; g < groups; ++g)
        for (int kidx = 0; kidx < k * k; ++kidx)
            for (int axis = 0; axis < 2; ++axis) {
                const int kpos = axis == 0 ? kidx / k : kidx % k;
                for (int py = 0; py < h; ++py)
                    for (int px = 0; px < w; ++px) {
                        double d = rng.uniform(-1.0, 1.0);
                        const double s = (axis == 0 ? py : px) + kpos - pad + d;
                        if (std::fabs(s - std::round(s)) < 5e-3) d += 0.01;
                        off.v[idx++] = d;
                    }
            }
    return off;
}

}  // namespace

// ---------------------------------------------------------------- primitives

TEST_CASE("grad: relu") {
    SplitMix64 rng(101);
    for (int t = 0; t < 5; ++t) {
        const Tensor coef = randn(rng, {3, 4, 4});
        CHECK(gradcheck({randn_away(rng, {3, 4, 4})}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::relu(g, in[0]), coef);
              }) < kGradTol);
    }
}

TEST_CASE("grad: sigmoid") {
    SplitMix64 rng(102);
    for (int t = 0; t < 5; ++t) {
        const Tensor coef = randn(rng, {2, 3, 5});
        CHECK(gradcheck({randn(rng, {2, 3, 5})}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::sigmoid(g, in[0]), coef);
              }) < kGradTol);
    }
}

TEST_CASE("grad: add and scale_add") {
    SplitMix64 rng(103);
    for (int t = 0; t < 5; ++t) {
        const Tensor coef = randn(rng, {2, 3, 3});
        CHECK(gradcheck({randn(rng, {2, 3, 3}), randn(rng, {2, 3, 3})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, ops::add(g, in[0], in[1]), coef);
                        }) < kGradTol);
        CHECK(gradcheck({Tensor::scalar(rng.normal()), randn(rng, {2, 3, 3}),
                         Tensor::scalar(rng.normal()), randn(rng, {2, 3, 3})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(
                                g, ops::scale_add(g, in[0], in[1], in[2], in[3]), coef);
                        }) < kGradTol);
    }
}

TEST_CASE("grad: concat and slice") {
    SplitMix64 rng(104);
    for (int t = 0; t < 5; ++t) {
        const Tensor coef = randn(rng, {3, 4, 4});
        CHECK(gradcheck({randn(rng, {2, 4, 4}), randn(rng, {1, 4, 4}), randn(rng, {3, 4, 4})},
                        [&](Graph& g, const auto& in) {
                            const NodeId cat =
                                ops::concat_channels(g, {in[0], in[1], in[2]});
                            return ops::dot_const(g, ops::slice_channels(g, cat, 1, 4), coef);
                        }) < kGradTol);
    }
}

TEST_CASE("grad: pools and channel reductions") {
    SplitMix64 rng(105);
    for (int t = 0; t < 5; ++t) {
        const Tensor x = randn(rng, {4, 5, 5});
        const Tensor cvec = randn(rng, {4});
        const Tensor cmap = randn(rng, {1, 5, 5});
        CHECK(gradcheck({x}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::global_avg_pool(g, in[0]), cvec);
              }) < kGradTol);
        CHECK(gradcheck({x}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::global_max_pool(g, in[0]), cvec);
              }) < kGradTol);
        CHECK(gradcheck({x}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::channel_mean(g, in[0]), cmap);
              }) < kGradTol);
        CHECK(gradcheck({x}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::channel_max(g, in[0]), cmap);
              }) < kGradTol);
    }
}

TEST_CASE("grad: broadcast scaling") {
    SplitMix64 rng(106);
    for (int t = 0; t < 5; ++t) {
        const Tensor coef = randn(rng, {3, 4, 4});
        CHECK(gradcheck({randn(rng, {3, 4, 4}), randn(rng, {3})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, ops::mul_channels(g, in[0], in[1]), coef);
                        }) < kGradTol);
        CHECK(gradcheck({randn(rng, {3, 4, 4}), randn(rng, {1, 4, 4})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, ops::mul_spatial(g, in[0], in[1]), coef);
                        }) < kGradTol);
    }
}

TEST_CASE("grad: dense") {
    SplitMix64 rng(107);
    for (int t = 0; t < 5; ++t) {
        const Tensor coef = randn(rng, {4});
        CHECK(gradcheck({randn(rng, {6}), randn(rng, {4, 6}), randn(rng, {4})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, ops::dense(g, in[0], in[1], in[2]), coef);
                        }) < kGradTol);
    }
}

TEST_CASE("grad: conv2d across strides and paddings") {
    SplitMix64 rng(108);
    struct Cfg {
        int cin, cout, k, h, w, stride, pad;
    };
    const Cfg cfgs[] = {
        {3, 4, 3, 6, 6, 1, 1}, {2, 3, 3, 7, 5, 2, 1}, {4, 2, 1, 4, 4, 1, 0},
        {1, 5, 3, 5, 5, 1, 1}, {2, 2, 5, 8, 8, 1, 2},
    };
    for (const Cfg& c : cfgs) {
        const int oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
        const int ow = (c.w + 2 * c.pad - c.k) / c.stride + 1;
        const Tensor coef = randn(rng, {c.cout, oh, ow});
        CHECK(gradcheck({randn(rng, {c.cin, c.h, c.w}), randn(rng, {c.cout, c.cin, c.k, c.k}),
                         randn(rng, {c.cout})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(
                                g, ops::conv2d(g, in[0], in[1], in[2], c.stride, c.pad), coef);
                        }) < kGradTol);
        // no-bias variant
        CHECK(gradcheck({randn(rng, {c.cin, c.h, c.w}), randn(rng, {c.cout, c.cin, c.k, c.k})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(
                                g, ops::conv2d(g, in[0], in[1], -1, c.stride, c.pad), coef);
                        }) < kGradTol);
    }
}

TEST_CASE("grad: modulated deformable conv") {
    SplitMix64 rng(109);
    for (int t = 0; t < 5; ++t) {
        const int groups = (t % 2 == 0) ? 1 : 2;
        const int cin = 2, cout = 3, k = 3, h = 5, w = 5;
        const Tensor coef = randn(rng, {cout, h, w});
        CHECK(gradcheck({randn(rng, {cin, h, w}), randn(rng, {cout, cin, k, k}),
                         safe_offsets(rng, groups, k, h, w),
                         rand_uniform(rng, {groups * k * k, h, w}, 0.1, 0.9)},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(
                                g, ops::deform_conv(g, in[0], in[1], in[2], in[3], groups, k),
                                coef);
                        }) < kGradTol);
    }
}

TEST_CASE("grad: losses and gathers") {
    SplitMix64 rng(110);
    for (int t = 0; t < 5; ++t) {
        // l1: keep |a-b| bounded away from the kink at 0
        Tensor a = randn(rng, {3, 4, 4});
        Tensor diff = randn_away(rng, {3, 4, 4}, 0.05);
        Tensor b = a;
        for (size_t i = 0; i < b.v.size(); ++i) b.v[i] += diff.v[i];
        CHECK(gradcheck({a, b}, [&](Graph& g, const auto& in) {
                  return ops::l1_loss(g, in[0], in[1]);
              }) < kGradTol);

        const Tensor targets = rand_uniform(rng, {2, 3, 3}, 0.0, 1.0);
        CHECK(gradcheck({randn(rng, {2, 3, 3})}, [&](Graph& g, const auto& in) {
                  return ops::bce_with_logits(g, in[0], targets);
              }) < kGradTol);

        const std::vector<std::pair<int, int>> cells = {{0, 1}, {2, 3}, {2, 3}, {3, 0}};
        const Tensor coef = randn(rng, {static_cast<int>(cells.size()) * 3});
        CHECK(gradcheck({randn(rng, {3, 4, 4})}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, ops::gather_cells(g, in[0], cells), coef);
              }) < kGradTol);

        const Tensor c3 = randn(rng, {5});
        CHECK(gradcheck({randn(rng, {5}), randn(rng, {5}), randn(rng, {5})},
                        [&](Graph& g, const auto& in) {
                            const std::vector<NodeId> parts = {
                                ops::dot_const(g, in[0], c3), ops::dot_const(g, in[1], c3),
                                ops::dot_const(g, in[2], c3)};
                            return ops::sum_weighted(g, parts, {5.0, 1.0, 0.25});
                        }) < kGradTol);
    }
}

// ------------------------------------------------------------ deformable conv

TEST_CASE("deformable conv degenerates to standard conv") {
    SplitMix64 rng(111);
    const int cin = 4, cout = 3, k = 3, h = 6, w = 6, groups = 2;
    const Tensor x = randn(rng, {cin, h, w});
    const Tensor wt = randn(rng, {cout, cin, k, k});
    const Tensor off0 = Tensor::zeros({groups * 2 * k * k, h, w});
    const Tensor mask1 = Tensor::full({groups * k * k, h, w}, 1.0);

    Graph g;
    const NodeId y = ops::deform_conv(g, g.constant(x), g.constant(wt), g.constant(off0),
                                      g.constant(mask1), groups, k);
    const Tensor plain = conv2d_forward(x, wt, nullptr, 1, k / 2);
    CHECK(g.val(y).max_abs_diff(plain) < 1e-6);

    const Tensor mask0 = Tensor::zeros({groups * k * k, h, w});
    Graph g2;
    const NodeId y0 = ops::deform_conv(g2, g2.constant(x), g2.constant(wt), g2.constant(off0),
                                       g2.constant(mask0), groups, k);
    for (double e : g2.val(y0).v) CHECK(e == 0.0);
}

TEST_CASE("deformable conv matches brute-force evaluation") {
    SplitMix64 rng(112);
    for (int t = 0; t < 3; ++t) {
        const int k = 3, h = 4, w = 4;
        const Tensor x = randn(rng, {1, h, w});
        const Tensor wt = randn(rng, {2, 1, k, k});
        const Tensor off = rand_uniform(rng, {2 * k * k, h, w}, -1.0, 1.0);
        const Tensor mask = rand_uniform(rng, {k * k, h, w}, 0.0, 1.0);
        Graph g;
        const NodeId y = ops::deform_conv(g, g.constant(x), g.constant(wt), g.constant(off),
                                          g.constant(mask), 1, k);
        const Tensor want = oracle::deform_conv(x, wt, off, mask, 1, k);
        CHECK(g.val(y).max_abs_diff(want) < 1e-10);
    }
}

TEST_CASE("deformable conv rejects bad shapes") {
    SplitMix64 rng(113);
    Graph g;
    const NodeId x = g.constant(randn(rng, {3, 4, 4}));
    const NodeId wt = g.constant(randn(rng, {2, 3, 3, 3}));
    const NodeId off = g.constant(Tensor::zeros({2 * 2 * 9, 4, 4}));
    const NodeId mask = g.constant(Tensor::full({2 * 9, 4, 4}, 1.0));
    // 3 channels not divisible into 2 groups
    CHECK_THROWS_AS(ops::deform_conv(g, x, wt, off, mask, 2, 3), ConfigError);
    // offsets sized for the wrong group count
    const NodeId off1 = g.constant(Tensor::zeros({2 * 9, 4, 4}));
    const NodeId mask1 = g.constant(Tensor::full({9, 4, 4}, 1.0));
    CHECK_THROWS_AS(ops::deform_conv(g, x, wt, off, mask1, 1, 3), ConfigError);
    CHECK_THROWS_AS(ops::deform_conv(g, x, wt, off1, mask, 1, 3), ConfigError);
    (void)off1;
}

// ------------------------------------------------------------------ attention

TEST_CASE("channel attention matches scalar oracle and stays in (0,1)") {
    SplitMix64 rng(114);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(200 + static_cast<uint64_t>(t));
        blocks::def_channel_attention(ps, init, "ca", 8);
        const Tensor x = randn(rng, {8, 5, 5});

        Graph g;
        const NodeId y = blocks::channel_attention(g, ps, "ca", g.constant(x));
        const Tensor want = oracle::channel_attention(
            x, ps.at("ca.fc1.w").value, ps.at("ca.fc1.b").value, ps.at("ca.fc2.w").value,
            ps.at("ca.fc2.b").value);
        CHECK(g.val(y).max_abs_diff(want) < 1e-10);

        const std::vector<double> scale =
            oracle::channel_scale(x, ps.at("ca.fc1.w").value, ps.at("ca.fc1.b").value,
                                  ps.at("ca.fc2.w").value, ps.at("ca.fc2.b").value);
        for (double s : scale) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("channel attention trivial cases") {
    ParamStore ps;
    SplitMix64 init(1);
    blocks::def_channel_attention(ps, init, "ca", 8);
    SplitMix64 rng(2);
    const Tensor x = randn(rng, {8, 3, 3});

    ParamStore zero;
    SplitMix64 dummy(1);
    blocks::def_channel_attention(zero, dummy, "ca", 8);
    for (const auto& p : zero.all()) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
    Graph g;
    const NodeId y = blocks::channel_attention(g, zero, "ca", g.constant(x));
    Tensor half = x;
    for (double& e : half.v) e *= 0.5;
    CHECK(g.val(y).max_abs_diff(half) < 1e-12);

    // zero input, zero biases -> zero output (scale is finite, input is 0)
    Graph g2;
    const NodeId y2 = blocks::channel_attention(g2, ps, "ca", g2.constant(Tensor({8, 3, 3})));
    for (double e : g2.val(y2).v) CHECK(e == 0.0);
}

TEST_CASE("grad: channel attention") {
    SplitMix64 rng(115);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(300 + static_cast<uint64_t>(t));
        blocks::def_channel_attention(ps, init, "ca", 6);
        const Tensor coef = randn(rng, {6, 4, 4});
        const Tensor x = randn(rng, {6, 4, 4});
        CHECK(gradcheck(ps, {x}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, blocks::channel_attention(g, ps, "ca", in[0]), coef);
              }) < kGradTol);
    }
}

TEST_CASE("spatial attention matches scalar oracle") {
    SplitMix64 rng(116);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(400 + static_cast<uint64_t>(t));
        blocks::def_spatial_attention(ps, init, "sa");
        const Tensor x = randn(rng, {4, 6, 6});
        Graph g;
        const NodeId y = blocks::spatial_attention(g, ps, "sa", g.constant(x));
        const Tensor want =
            oracle::spatial_attention(x, ps.at("sa.conv.w").value, ps.at("sa.conv.b").value);
        CHECK(g.val(y).max_abs_diff(want) < 1e-10);

        const Tensor scale =
            oracle::spatial_scale(x, ps.at("sa.conv.w").value, ps.at("sa.conv.b").value);
        for (double s : scale.v) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("spatial attention trivial cases") {
    ParamStore ps;
    SplitMix64 init(1);
    blocks::def_spatial_attention(ps, init, "sa");
    for (const auto& p : ps.all()) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
    SplitMix64 rng(3);
    const Tensor x = randn(rng, {4, 5, 5});
    Graph g;
    const NodeId y = blocks::spatial_attention(g, ps, "sa", g.constant(x));
    Tensor half = x;
    for (double& e : half.v) e *= 0.5;
    CHECK(g.val(y).max_abs_diff(half) < 1e-12);

    Graph g2;
    const NodeId y2 = blocks::spatial_attention(g2, ps, "sa", g2.constant(Tensor({4, 5, 5})));
    for (double e : g2.val(y2).v) CHECK(e == 0.0);
}

TEST_CASE("grad: spatial attention") {
    SplitMix64 rng(117);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(500 + static_cast<uint64_t>(t));
        blocks::def_spatial_attention(ps, init, "sa");
        const Tensor coef = randn(rng, {3, 5, 5});
        CHECK(gradcheck(ps, {randn(rng, {3, 5, 5})}, [&](Graph& g, const auto& in) {
                  return ops::dot_const(g, blocks::spatial_attention(g, ps, "sa", in[0]), coef);
              }) < kGradTol);
    }
}

// ------------------------------------------------------------------ RDB/RDCA

TEST_CASE("rdb matches scalar dense-connection oracle") {
    SplitMix64 rng(118);
    for (int t = 0; t < 3; ++t) {
        ParamStore ps;
        SplitMix64 init(600 + static_cast<uint64_t>(t));
        blocks::def_rdb(ps, init, "rdb", 16);
        const Tensor x = randn(rng, {16, 4, 4});
        Graph g;
        const NodeId y = blocks::rdb(g, ps, "rdb", g.constant(x));
        const Tensor want = oracle::rdb(x, ps, "rdb", blocks::kRdbLayers);
        CHECK(g.val(y).max_abs_diff(want) < 1e-9);
    }
}

TEST_CASE("rdb trivial cases and channel mismatch") {
    ParamStore ps;
    SplitMix64 init(1);
    blocks::def_rdb(ps, init, "rdb", 16);
    for (const auto& p : ps.all()) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
    SplitMix64 rng(4);
    const Tensor x = randn(rng, {16, 4, 4});
    Graph g;
    CHECK(g.val(blocks::rdb(g, ps, "rdb", g.constant(x))).max_abs_diff(x) == 0.0);

    Graph g2;
    const Tensor zero({16, 4, 4});
    CHECK(g2.val(blocks::rdb(g2, ps, "rdb", g2.constant(zero))).max_abs_diff(zero) == 0.0);

    Graph g3;
    CHECK_THROWS_AS(blocks::rdb(g3, ps, "rdb", g3.constant(randn(rng, {8, 4, 4}))), ConfigError);
}

TEST_CASE("grad: rdb") {
    SplitMix64 rng(119);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(700 + static_cast<uint64_t>(t));
        blocks::def_rdb(ps, init, "rdb", 8);
        const Tensor coef = randn(rng, {8, 4, 4});
        CHECK(gradcheck(ps, {randn(rng, {8, 4, 4})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, blocks::rdb(g, ps, "rdb", in[0]), coef);
                        },
                        /*max_coords=*/8, /*coord_seed=*/900 + static_cast<uint64_t>(t)) <
              kGradTol);
    }
}

TEST_CASE("rdca trivial cases") {
    ParamStore ps;
    SplitMix64 init(1);
    blocks::def_rdca(ps, init, "r", 8);
    for (const auto& p : ps.all())
        if (p->name != "r.alpha" && p->name != "r.beta")
            std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
    CHECK(ps.at("r.alpha").value.v[0] == 1.0);
    CHECK(ps.at("r.beta").value.v[0] == 0.2);

    SplitMix64 rng(5);
    const Tensor x = randn(rng, {8, 4, 4});
    Graph g;
    CHECK(g.val(blocks::rdca(g, ps, "r", g.constant(x))).max_abs_diff(x) < 1e-12);

    ps.at("r.alpha").value.v[0] = 0.0;
    Graph g2;
    for (double e : g2.val(blocks::rdca(g2, ps, "r", g2.constant(x))).v) CHECK(e == 0.0);
}

TEST_CASE("rdca equals alpha*x + beta*branch with the branch computed separately") {
    SplitMix64 rng(120);
    ParamStore ps;
    SplitMix64 init(801);
    blocks::def_rdca(ps, init, "r", 8);
    ps.at("r.alpha").value.v[0] = 2.0;
    ps.at("r.beta").value.v[0] = 1.0;
    const Tensor x = randn(rng, {8, 4, 4});

    // Branch oracle: scalar dense stack -> channel attention -> 1x1 fusion.
    std::vector<Tensor> feats = {x};
    for (int i = 0; i < blocks::kRdbLayers; ++i) {
        const Tensor inp = feats.size() == 1 ? x : oracle::concat(feats);
        const std::string ln = "r.d" + std::to_string(i);
        feats.push_back(oracle::relu(
            oracle::conv2d(inp, ps.at(ln + ".w").value, &ps.at(ln + ".b").value, 1, 1)));
    }
    const Tensor att = oracle::channel_attention(
        oracle::concat(feats), ps.at("r.ca.fc1.w").value, ps.at("r.ca.fc1.b").value,
        ps.at("r.ca.fc2.w").value, ps.at("r.ca.fc2.b").value);
    const Tensor branch =
        oracle::conv2d(att, ps.at("r.lf.w").value, &ps.at("r.lf.b").value, 1, 0);

    Tensor want = x;
    for (size_t i = 0; i < want.v.size(); ++i) want.v[i] = 2.0 * x.v[i] + branch.v[i];

    Graph g;
    CHECK(g.val(blocks::rdca(g, ps, "r", g.constant(x))).max_abs_diff(want) < 1e-9);
}

TEST_CASE("grad: rdca (including alpha and beta)") {
    SplitMix64 rng(121);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(810 + static_cast<uint64_t>(t));
        blocks::def_rdca(ps, init, "r", 8);
        const Tensor coef = randn(rng, {8, 4, 4});
        CHECK(gradcheck(ps, {randn(rng, {8, 4, 4})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, blocks::rdca(g, ps, "r", in[0]), coef);
                        },
                        /*max_coords=*/8, /*coord_seed=*/910 + static_cast<uint64_t>(t)) <
              kGradTol);
    }
}

// ---------------------------------------------------------------------- AGRD

TEST_CASE("agrd equals the manual composition of its sub-blocks") {
    SplitMix64 rng(122);
    ParamStore ps;
    SplitMix64 init(820);
    blocks::def_agrd(ps, init, "a", 8);
    const Tensor x = randn(rng, {8, 6, 6});

    Graph g;
    const NodeId got = blocks::agrd(g, ps, "a", g.constant(x));

    Graph g2;
    NodeId h = blocks::conv_relu(g2, ps, "a.reduce", g2.constant(x));
    h = blocks::channel_attention(g2, ps, "a.ca", h);
    h = blocks::spatial_attention(g2, ps, "a.sa", h);
    h = blocks::rdb(g2, ps, "a.rdb0", h);
    h = blocks::rdb(g2, ps, "a.rdb1", h);
    const NodeId want = blocks::conv(g2, ps, "a.restore", h);

    CHECK(g.val(got).max_abs_diff(g2.val(want)) == 0.0);
}

TEST_CASE("agrd shape contract and trivial zero case") {
    ParamStore ps;
    SplitMix64 init(830);
    blocks::def_agrd(ps, init, "a", 64);
    SplitMix64 rng(6);
    const Tensor x = randn(rng, {64, 17, 17});
    Graph g;
    const NodeId y = blocks::agrd(g, ps, "a", g.constant(x));
    CHECK(g.val(y).shape == std::vector<int>{64, 17, 17});
    CHECK(g.val(y).all_finite());

    ParamStore zero;
    SplitMix64 dummy(1);
    blocks::def_agrd(zero, dummy, "z", 8);
    for (const auto& p : zero.all()) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
    Graph g2;
    const NodeId y2 = blocks::agrd(g2, zero, "z", g2.constant(randn(rng, {8, 5, 5})));
    for (double e : g2.val(y2).v) CHECK(e == 0.0);

    ParamStore odd;
    CHECK_THROWS_AS(blocks::def_agrd(odd, dummy, "o", 7), ConfigError);
}

TEST_CASE("grad: agrd") {
    SplitMix64 rng(123);
    for (int t = 0; t < 5; ++t) {
        ParamStore ps;
        SplitMix64 init(840 + static_cast<uint64_t>(t));
        blocks::def_agrd(ps, init, "a", 8);
        const Tensor coef = randn(rng, {8, 5, 5});
        CHECK(gradcheck(ps, {randn(rng, {8, 5, 5})},
                        [&](Graph& g, const auto& in) {
                            return ops::dot_const(g, blocks::agrd(g, ps, "a", in[0]), coef);
                        },
                        /*max_coords=*/5, /*coord_seed=*/920 + static_cast<uint64_t>(t)) <
              kGradTol);
    }
}

TEST_CASE("blocks are deterministic across repeated evaluation") {
    ParamStore ps;
    SplitMix64 init(850);
    blocks::def_agrd(ps, init, "a", 8);
    SplitMix64 rng(7);
    const Tensor x = randn(rng, {8, 6, 6});
    Graph g1, g2;
    const Tensor y1 = g1.val(blocks::agrd(g1, ps, "a", g1.constant(x)));
    const Tensor y2 = g2.val(blocks::agrd(g2, ps, "a", g2.constant(x)));
    CHECK(y1.max_abs_diff(y2) == 0.0);
}
