#pragma once

#include <string>

#include "bird/graph.hpp"
#include "bird/rng.hpp"

namespace bird::blocks {

// Parameter definition (creation) helpers. Each def_* registers the named
// parameters of one layer/block in the store, drawing initial values from the
// RNG in a fixed order. Definition happens once, up front, so the set of
// parameters — and therefore the RNG stream — never depends on runtime flags.
//
// Naming convention: dotted paths, e.g. "bb.l0a.w", "fwd.ltmf.agrd1.ca.fc1.b".
void def_conv(ParamStore& ps, SplitMix64& rng, const std::string& name, int cout, int cin,
              int k, bool bias = true);
// Zero-initialized conv (used for the deform-parameter emitting layer so the
// deformable sampling starts at the regular grid).
void def_conv_zero(ParamStore& ps, const std::string& name, int cout, int cin, int k,
                   bool bias = true);
void def_dense(ParamStore& ps, SplitMix64& rng, const std::string& name, int out, int in);
void def_scalar(ParamStore& ps, const std::string& name, double value);
void def_channel_attention(ParamStore& ps, SplitMix64& rng, const std::string& name, int c);
void def_spatial_attention(ParamStore& ps, SplitMix64& rng, const std::string& name);
void def_rdb(ParamStore& ps, SplitMix64& rng, const std::string& name, int c);
void def_rdca(ParamStore& ps, SplitMix64& rng, const std::string& name, int c);
void def_agrd(ParamStore& ps, SplitMix64& rng, const std::string& name, int c);

// Graph application helpers. These fetch parameters by name and build the
// block's subgraph; structural hyper-parameters (kernel sizes, dense-layer
// counts, hidden widths) are recovered from the stored parameter shapes.
NodeId conv(Graph& g, ParamStore& ps, const std::string& name, NodeId x, int stride = 1,
            int pad = -1);  // pad = -1 means "same" (k/2)
NodeId conv_relu(Graph& g, ParamStore& ps, const std::string& name, NodeId x, int stride = 1,
                 int pad = -1);
NodeId channel_attention(Graph& g, ParamStore& ps, const std::string& name, NodeId x);
NodeId spatial_attention(Graph& g, ParamStore& ps, const std::string& name, NodeId x);
NodeId rdb(Graph& g, ParamStore& ps, const std::string& name, NodeId x);
NodeId rdca(Graph& g, ParamStore& ps, const std::string& name, NodeId x);
NodeId agrd(Graph& g, ParamStore& ps, const std::string& name, NodeId x);

// Channel width of the attention MLP hidden layer: reduction ratio 16 with a
// floor of 4 channels.
int attention_hidden(int c);

inline constexpr int kRdbLayers = 4;
inline constexpr int kRdbGrowth = 32;

}  // namespace bird::blocks
