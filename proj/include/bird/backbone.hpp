#pragma once

#include <string>

#include "bird/graph.hpp"
#include "bird/rng.hpp"

namespace bird::backbone {

// Spatial feature extractor: a three-level pyramid where each level is a
// stride-1 conv followed by a stride-2 conv (total downsampling 8x). All
// layers have 48 filters except the last, which emits the 64-channel feature.
void define(ParamStore& ps, SplitMix64& rng, const std::string& prefix = "bb");

// frame must be (1, H, W) with H and W divisible by 8; returns (64, H/8, W/8).
NodeId extract(Graph& g, ParamStore& ps, NodeId frame, const std::string& prefix = "bb");

}  // namespace bird::backbone
