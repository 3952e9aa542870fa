#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bird/box.hpp"
#include "bird/graph.hpp"
#include "bird/rng.hpp"

namespace bird::detection {

// Feature stride of the single-scale head (the backbone downsamples by 8).
inline constexpr int kStride = 8;

// Anchor-free head: one conv stack for regression/objectness, one for
// classification. Emits per-cell (tx, ty, tw, th), an objectness logit and
// class logits at the fused-feature resolution.
void define_head(ParamStore& ps, SplitMix64& rng, int num_classes = 1,
                 const std::string& prefix = "det");

struct HeadNodes {
    NodeId reg;  // (4, h, w)
    NodeId obj;  // (1, h, w)
    NodeId cls;  // (num_classes, h, w)
};
HeadNodes head_forward(Graph& g, ParamStore& ps, NodeId fused,
                       const std::string& prefix = "det");

// Cell (gy,gx) with offsets decodes to center ((gx+0.5+tx)*stride,
// (gy+0.5+ty)*stride) and size (exp(tw)*stride, exp(th)*stride). Score is
// sigmoid(obj)*sigmoid(cls); boxes are clipped to the frame, thresholded and
// greedily NMS-suppressed; the result is sorted by descending score.
std::vector<Detection> decode(const Tensor& reg, const Tensor& obj, const Tensor& cls,
                              int stride, double score_thresh, double nms_iou, int frame_h,
                              int frame_w);

struct Assignment {
    std::vector<int> cell_gt;               // per grid cell: GT index or -1
    std::vector<std::pair<int, int>> cells; // (gy,gx) per GT; (-1,-1) if displaced
    std::vector<int> missed;                // GTs displaced by the same-cell tie rule
};
// The single cell containing each GT center is positive for that GT; when two
// GT centers share a cell, the lower-index GT wins.
Assignment assign_targets(const std::vector<Box>& gts, int grid_h, int grid_w, int stride,
                          int frame_h, int frame_w);

struct FrameLoss {
    NodeId l_reg, l_cls, l_obj, l_d;  // scalars
    int positives = 0;
    int missed = 0;
};
// L_D = lambda * L_reg + L_cls + L_obj: IoU loss averaged over positives,
// class BCE over positives, objectness BCE summed over all cells and divided
// by the positive count (floor 1), so a lone small-target positive is not
// drowned out by the background cells.
FrameLoss detection_loss(Graph& g, const HeadNodes& head, const std::vector<Box>& gts,
                         int stride, int frame_h, int frame_w, double lambda);

}  // namespace bird::detection
