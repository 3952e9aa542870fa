#include "bird/fusion.hpp"

#include "bird/blocks.hpp"
#include "bird/error.hpp"
#include "bird/ops.hpp"

namespace bird::fusion {

namespace {
constexpr int kOffsetCh = kDeformGroups * 2 * kKernel * kKernel;  // 1152
constexpr int kMaskCh = kDeformGroups * kKernel * kKernel;        // 576
}  // namespace

void def_ltmf(ParamStore& ps, SplitMix64& rng, const std::string& name) {
    blocks::def_conv(ps, rng, name + ".bottleneck", kChannels, 3 * kChannels, 1);
    blocks::def_agrd(ps, rng, name + ".agrd0", kChannels);
    blocks::def_agrd(ps, rng, name + ".agrd1", kChannels);
    blocks::def_agrd(ps, rng, name + ".agrd2", kChannels);
    // The parameter head starts at zero so sampling begins on the regular
    // grid (offsets 0, masks sigmoid(0)=0.5) instead of at random positions.
    blocks::def_conv_zero(ps, name + ".head", kOffsetCh + kMaskCh, kChannels, 3);
    ps.create(name + ".dcn.w",
              [&rng] {
                  Tensor w({kChannels, kChannels, kKernel, kKernel});
                  const double stddev =
                      std::sqrt(2.0 / static_cast<double>(kChannels * kKernel * kKernel));
                  for (double& e : w.v) e = rng.normal(0.0, stddev);
                  return w;
              }());
}

LtmfOut ltmf(Graph& g, ParamStore& ps, const std::string& name, NodeId prev, NodeId cur,
             NodeId next) {
    const Tensor& c = g.val(cur);
    if (!g.val(prev).same_shape(c) || !g.val(next).same_shape(c))
        throw InputError("ltmf: neighbor shapes differ: " + g.val(prev).shape_str() + " vs " +
                         c.shape_str() + " vs " + g.val(next).shape_str());

    const NodeId cat = ops::concat_channels(g, {prev, cur, next});
    const NodeId fc = blocks::conv_relu(g, ps, name + ".bottleneck", cat);
    NodeId h = blocks::agrd(g, ps, name + ".agrd0", fc);
    h = blocks::agrd(g, ps, name + ".agrd1", h);
    h = blocks::agrd(g, ps, name + ".agrd2", h);
    const NodeId head = blocks::conv(g, ps, name + ".head", h);
    const NodeId offsets = ops::slice_channels(g, head, 0, kOffsetCh);
    const NodeId masks =
        ops::sigmoid(g, ops::slice_channels(g, head, kOffsetCh, kOffsetCh + kMaskCh));
    const NodeId fused = ops::deform_conv(g, fc, g.param(ps.at(name + ".dcn.w")), offsets,
                                          masks, kDeformGroups, kKernel);
    return {fused, offsets, masks};
}

void def_gtmf(ParamStore& ps, SplitMix64& rng, const std::string& name) {
    blocks::def_conv(ps, rng, name + ".in", kChannels, 2 * kChannels, 3);
    blocks::def_rdca(ps, rng, name + ".rdca0", kChannels);
    blocks::def_rdca(ps, rng, name + ".rdca1", kChannels);
    blocks::def_rdca(ps, rng, name + ".rdca2", kChannels);
    blocks::def_conv(ps, rng, name + ".out", kChannels, kChannels, 3);
}

NodeId gtmf(Graph& g, ParamStore& ps, const std::string& name, NodeId local, NodeId propagated) {
    if (!g.val(local).same_shape(g.val(propagated)))
        throw InputError("gtmf: shape mismatch " + g.val(local).shape_str() + " vs " +
                         g.val(propagated).shape_str());
    const NodeId cat = ops::concat_channels(g, {local, propagated});
    NodeId h = blocks::conv_relu(g, ps, name + ".in", cat);
    h = blocks::rdca(g, ps, name + ".rdca0", h);
    h = blocks::rdca(g, ps, name + ".rdca1", h);
    h = blocks::rdca(g, ps, name + ".rdca2", h);
    return blocks::conv(g, ps, name + ".out", h);
}

}  // namespace bird::fusion
