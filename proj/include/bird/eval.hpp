#pragma once

#include <string>
#include <vector>

#include "bird/box.hpp"
#include "bird/model.hpp"

namespace bird::eval {

struct MatchCounts {
    int tp = 0, fp = 0, fn = 0;
};

// Greedy score-ordered matching: each prediction, in descending score order,
// takes the highest-IoU still-unmatched GT with IoU >= iou_thresh (exact ties
// go to the lower GT index). Matched predictions are TP, the rest FP;
// unmatched GTs are FN.
MatchCounts match_detections(std::vector<Detection> preds, const std::vector<Box>& gts,
                             double iou_thresh);

struct Prf1 {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};
// 0/0 -> 0 for precision and recall; f1 = 0 when precision + recall = 0.
Prf1 prf1(const MatchCounts& c);

struct PrPoint {
    double recall = 0.0, precision = 0.0;
};

// Predictions and ground truth of one frame, pooled for the AP sweep.
struct EvalFrame {
    std::vector<Detection> preds;
    std::vector<Box> gts;
};

struct ApResult {
    double ap50 = 0.0;
    std::vector<PrPoint> points;  // cumulative (recall, precision) per prediction
};

// All-points average precision: predictions pooled across frames, matched
// greedily in global score order within their own frame, precision envelope
// (max precision at recall >= r) integrated over recall.
ApResult average_precision(const std::vector<EvalFrame>& frames, double iou_thresh = 0.5);

// Prediction dump: 'bird-preds 1' header, then one line per frame:
// <seq> <frame> <n> followed by n groups of x1 y1 x2 y2 score.
struct FramePreds {
    int seq = 0;
    int frame = 0;
    std::vector<Detection> dets;
};
void write_predictions(const std::string& path, const std::vector<FramePreds>& preds);
std::vector<FramePreds> read_predictions(const std::string& path);

enum class BenchMode { recursive, sliding };

struct BenchResult {
    long backbone_forwards = 0;
    int frames = 0;      // frames with emitted detections
    double seconds = 0.0;
    double fps = 0.0;
};

// Recursive mode runs ceil(T/n) clips and touches each frame once; sliding
// mode re-runs an n-frame window (edge-truncated placement) per output frame,
// emitting only that frame: T*n backbone forwards.
BenchResult benchmark(BirdModel& model, const std::vector<Tensor>& seq, BenchMode mode, int n);

// Small PR-curve plot (raw points plus their precision envelope).
void write_pr_plot(const std::string& path, const std::vector<PrPoint>& points);

}  // namespace bird::eval
