#include "bird/backbone.hpp"

#include "bird/blocks.hpp"
#include "bird/error.hpp"

namespace bird::backbone {

void define(ParamStore& ps, SplitMix64& rng, const std::string& prefix) {
    blocks::def_conv(ps, rng, prefix + ".l0a", 48, 1, 3);
    blocks::def_conv(ps, rng, prefix + ".l0b", 48, 48, 3);
    blocks::def_conv(ps, rng, prefix + ".l1a", 48, 48, 3);
    blocks::def_conv(ps, rng, prefix + ".l1b", 48, 48, 3);
    blocks::def_conv(ps, rng, prefix + ".l2a", 48, 48, 3);
    blocks::def_conv(ps, rng, prefix + ".l2b", 64, 48, 3);
}

NodeId extract(Graph& g, ParamStore& ps, NodeId frame, const std::string& prefix) {
    const Tensor& f = g.val(frame);
    if (f.rank() != 3 || f.dim(0) != 1)
        throw InputError("frame must be (1,H,W), got " + f.shape_str());
    if (f.dim(1) % 8 != 0 || f.dim(2) % 8 != 0)
        throw InputError("frame size " + std::to_string(f.dim(1)) + "x" +
                         std::to_string(f.dim(2)) + " must be divisible by 8");
    NodeId h = blocks::conv_relu(g, ps, prefix + ".l0a", frame);
    h = blocks::conv_relu(g, ps, prefix + ".l0b", h, /*stride=*/2);
    h = blocks::conv_relu(g, ps, prefix + ".l1a", h);
    h = blocks::conv_relu(g, ps, prefix + ".l1b", h, /*stride=*/2);
    h = blocks::conv_relu(g, ps, prefix + ".l2a", h);
    return blocks::conv_relu(g, ps, prefix + ".l2b", h, /*stride=*/2);
}

}  // namespace bird::backbone
