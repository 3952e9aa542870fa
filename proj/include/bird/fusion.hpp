#pragma once

#include <string>

#include "bird/graph.hpp"
#include "bird/rng.hpp"

namespace bird::fusion {

// Feature width c, deformable group count d and kernel K are fixed by the
// network setting: 64 channels, 64 groups, 3x3.
inline constexpr int kChannels = 64;
inline constexpr int kDeformGroups = 64;
inline constexpr int kKernel = 3;

struct LtmfOut {
    NodeId fused;    // (64, h, w)
    NodeId offsets;  // (d*2K^2, h, w) = (1152, h, w)
    NodeId masks;    // (d*K^2, h, w)  = (576, h, w), sigmoid-bounded
};

// Local temporal motion-aware fusion: concat(prev, cur, next) -> 1x1
// bottleneck (F^c) -> 3 AGRD blocks -> parameter head emitting offsets
// (linear) and masks (sigmoid) -> modulated deformable conv over F^c.
void def_ltmf(ParamStore& ps, SplitMix64& rng, const std::string& name);
LtmfOut ltmf(Graph& g, ParamStore& ps, const std::string& name, NodeId prev, NodeId cur,
             NodeId next);

// Global temporal motion-aware fusion: concat(local, propagated) -> 3x3 conv
// to 64 -> 3 RDCA blocks -> 3x3 conv to 64.
void def_gtmf(ParamStore& ps, SplitMix64& rng, const std::string& name);
NodeId gtmf(Graph& g, ParamStore& ps, const std::string& name, NodeId local, NodeId propagated);

}  // namespace bird::fusion
