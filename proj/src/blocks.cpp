#include "bird/blocks.hpp"

#include <cmath>

#include "bird/error.hpp"
#include "bird/ops.hpp"

namespace bird::blocks {

namespace {

Tensor he_normal(SplitMix64& rng, std::vector<int> shape, int fan_in) {
    Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& e : t.v) e = rng.normal(0.0, stddev);
    return t;
}

NodeId pnode(Graph& g, ParamStore& ps, const std::string& name) { return g.param(ps.at(name)); }

}  // namespace

int attention_hidden(int c) { return std::max(4, c / 16); }

void def_conv(ParamStore& ps, SplitMix64& rng, const std::string& name, int cout, int cin, int k,
              bool bias) {
    ps.create(name + ".w", he_normal(rng, {cout, cin, k, k}, cin * k * k));
    if (bias) ps.create(name + ".b", Tensor({cout}));
}

void def_conv_zero(ParamStore& ps, const std::string& name, int cout, int cin, int k, bool bias) {
    ps.create(name + ".w", Tensor({cout, cin, k, k}));
    if (bias) ps.create(name + ".b", Tensor({cout}));
}

void def_dense(ParamStore& ps, SplitMix64& rng, const std::string& name, int out, int in) {
    ps.create(name + ".w", he_normal(rng, {out, in}, in));
    ps.create(name + ".b", Tensor({out}));
}

void def_scalar(ParamStore& ps, const std::string& name, double value) {
    ps.create(name, Tensor::scalar(value));
}

void def_channel_attention(ParamStore& ps, SplitMix64& rng, const std::string& name, int c) {
    const int hidden = attention_hidden(c);
    def_dense(ps, rng, name + ".fc1", hidden, c);
    def_dense(ps, rng, name + ".fc2", c, hidden);
}

void def_spatial_attention(ParamStore& ps, SplitMix64& rng, const std::string& name) {
    def_conv(ps, rng, name + ".conv", 1, 2, 7);
}

void def_rdb(ParamStore& ps, SplitMix64& rng, const std::string& name, int c) {
    for (int i = 0; i < kRdbLayers; ++i)
        def_conv(ps, rng, name + ".d" + std::to_string(i), kRdbGrowth, c + i * kRdbGrowth, 3);
    def_conv(ps, rng, name + ".lf", c, c + kRdbLayers * kRdbGrowth, 1);
}

void def_rdca(ParamStore& ps, SplitMix64& rng, const std::string& name, int c) {
    for (int i = 0; i < kRdbLayers; ++i)
        def_conv(ps, rng, name + ".d" + std::to_string(i), kRdbGrowth, c + i * kRdbGrowth, 3);
    def_channel_attention(ps, rng, name + ".ca", c + kRdbLayers * kRdbGrowth);
    def_conv(ps, rng, name + ".lf", c, c + kRdbLayers * kRdbGrowth, 1);
    def_scalar(ps, name + ".alpha", 1.0);
    def_scalar(ps, name + ".beta", 0.2);
}

void def_agrd(ParamStore& ps, SplitMix64& rng, const std::string& name, int c) {
    if (c % 2 != 0)
        throw ConfigError("agrd: channel count must be even, got " + std::to_string(c));
    const int half = c / 2;
    def_conv(ps, rng, name + ".reduce", half, c, 3);
    def_channel_attention(ps, rng, name + ".ca", half);
    def_spatial_attention(ps, rng, name + ".sa");
    def_rdb(ps, rng, name + ".rdb0", half);
    def_rdb(ps, rng, name + ".rdb1", half);
    def_conv(ps, rng, name + ".restore", c, half, 3);
}

NodeId conv(Graph& g, ParamStore& ps, const std::string& name, NodeId x, int stride, int pad) {
    Param& w = ps.at(name + ".w");
    Param* b = ps.find(name + ".b");
    if (pad < 0) pad = w.value.dim(2) / 2;
    return ops::conv2d(g, x, g.param(w), b ? g.param(*b) : NodeId(-1), stride, pad);
}

NodeId conv_relu(Graph& g, ParamStore& ps, const std::string& name, NodeId x, int stride,
                 int pad) {
    return ops::relu(g, conv(g, ps, name, x, stride, pad));
}

NodeId channel_attention(Graph& g, ParamStore& ps, const std::string& name, NodeId x) {
    // Scale = sigmoid(MLP(avgpool) + MLP(maxpool)) with a shared two-layer MLP.
    const NodeId fc1w = pnode(g, ps, name + ".fc1.w"), fc1b = pnode(g, ps, name + ".fc1.b");
    const NodeId fc2w = pnode(g, ps, name + ".fc2.w"), fc2b = pnode(g, ps, name + ".fc2.b");
    auto mlp = [&](NodeId pooled) {
        return ops::dense(g, ops::relu(g, ops::dense(g, pooled, fc1w, fc1b)), fc2w, fc2b);
    };
    const NodeId s = ops::sigmoid(
        g, ops::add(g, mlp(ops::global_avg_pool(g, x)), mlp(ops::global_max_pool(g, x))));
    return ops::mul_channels(g, x, s);
}

NodeId spatial_attention(Graph& g, ParamStore& ps, const std::string& name, NodeId x) {
    const NodeId pooled =
        ops::concat_channels(g, {ops::channel_mean(g, x), ops::channel_max(g, x)});
    const NodeId s = ops::sigmoid(g, conv(g, ps, name + ".conv", pooled));
    return ops::mul_spatial(g, x, s);
}

// Shared dense stem of RDB/RDCA: returns the concatenation of the input with
// the outputs of the densely connected conv+ReLU layers.
static NodeId dense_stack(Graph& g, ParamStore& ps, const std::string& name, NodeId x) {
    std::vector<NodeId> feats = {x};
    for (int i = 0; i < kRdbLayers; ++i) {
        const NodeId inp = feats.size() == 1 ? x : ops::concat_channels(g, feats);
        feats.push_back(conv_relu(g, ps, name + ".d" + std::to_string(i), inp));
    }
    return ops::concat_channels(g, feats);
}

NodeId rdb(Graph& g, ParamStore& ps, const std::string& name, NodeId x) {
    const NodeId fused = conv(g, ps, name + ".lf", dense_stack(g, ps, name, x));
    return ops::add(g, x, fused);
}

NodeId rdca(Graph& g, ParamStore& ps, const std::string& name, NodeId x) {
    const NodeId att = channel_attention(g, ps, name + ".ca", dense_stack(g, ps, name, x));
    const NodeId fused = conv(g, ps, name + ".lf", att);
    return ops::scale_add(g, pnode(g, ps, name + ".alpha"), x, pnode(g, ps, name + ".beta"),
                          fused);
}

NodeId agrd(Graph& g, ParamStore& ps, const std::string& name, NodeId x) {
    NodeId h = conv_relu(g, ps, name + ".reduce", x);
    h = channel_attention(g, ps, name + ".ca", h);
    h = spatial_attention(g, ps, name + ".sa", h);
    h = rdb(g, ps, name + ".rdb0", h);
    h = rdb(g, ps, name + ".rdb1", h);
    return conv(g, ps, name + ".restore", h);
}

}  // namespace bird::blocks
