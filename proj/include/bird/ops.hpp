#pragma once

#include <utility>
#include <vector>

#include "bird/graph.hpp"

namespace bird {
namespace ops {

// ---- elementwise ----
NodeId relu(Graph& g, NodeId x);
NodeId sigmoid(Graph& g, NodeId x);
NodeId add(Graph& g, NodeId a, NodeId b);
// alpha * x + beta * y with scalar nodes alpha, beta (RDCA residual mix).
NodeId scale_add(Graph& g, NodeId alpha, NodeId x, NodeId beta, NodeId y);

// ---- structure ----
NodeId concat_channels(Graph& g, const std::vector<NodeId>& xs);
NodeId slice_channels(Graph& g, NodeId x, int c0, int c1);

// ---- pooling / reductions on (c,h,w) ----
NodeId global_avg_pool(Graph& g, NodeId x);  // -> (c)
NodeId global_max_pool(Graph& g, NodeId x);  // -> (c)
NodeId channel_mean(Graph& g, NodeId x);     // -> (1,h,w)
NodeId channel_max(Graph& g, NodeId x);      // -> (1,h,w)

// ---- broadcast scaling ----
NodeId mul_channels(Graph& g, NodeId x, NodeId s);  // s: (c)
NodeId mul_spatial(Graph& g, NodeId x, NodeId s);   // s: (1,h,w)

// ---- dense layer on vectors: y = w x + b, w (m,n), x (n), b (m) ----
NodeId dense(Graph& g, NodeId x, NodeId w, NodeId b);

// ---- 2-d convolution, zero padding; bias = -1 for none ----
NodeId conv2d(Graph& g, NodeId x, NodeId w, NodeId b, int stride, int pad);

// Modulated deformable convolution, stride 1, zero padding, spatial-preserving.
//   x       (cin, h, w), cin divisible by groups
//   w       (cout, cin, k, k)
//   offsets (groups*2k², h, w)  layout [g][k][(dy,dx)]
//   masks   (groups*k², h, w)   in [0,1]
NodeId deform_conv(Graph& g, NodeId x, NodeId w, NodeId offsets, NodeId masks,
                   int groups, int k);

// ---- losses / scalars ----
NodeId l1_loss(Graph& g, NodeId a, NodeId b);            // mean |a - b|
NodeId bce_with_logits(Graph& g, NodeId logits, Tensor targets);  // mean over entries
// Rows gathered from (c,h,w) at the given (y,x) cells -> (n*c) vector.
NodeId gather_cells(Graph& g, NodeId x, const std::vector<std::pair<int, int>>& cells);
NodeId sum_weighted(Graph& g, const std::vector<NodeId>& scalars,
                    const std::vector<double>& coeffs);
// Scalar dot product with a fixed coefficient tensor: sum_i c_i * x_i.
NodeId dot_const(Graph& g, NodeId x, Tensor coeffs);

}  // namespace ops

// Bilinear interpolation of all channels of a (c,h,w) map at fractional
// position (x, y); x indexes width, y height. Zero padding outside the grid,
// so positions fully outside [-1,h]x[-1,w] contribute nothing.
std::vector<double> bilinear_sample(const Tensor& feature, double x, double y);

// Plain (non-graph) convolution forward used by inference-only paths and as
// the degenerate-deformable reference. Identical math to ops::conv2d.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad);

}  // namespace bird
