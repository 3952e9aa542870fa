#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bird/box.hpp"
#include "bird/tensor.hpp"

namespace bird::synth {

// One moving Gaussian blob. Motion is quadratic: center(t) = p0 + v*t + a*t^2/2.
struct TargetSpec {
    double x0 = 0.0, y0 = 0.0;  // initial sub-pixel center
    double vx = 0.0, vy = 0.0;  // px / frame
    double ax = 0.0, ay = 0.0;  // optional curvature, px / frame^2
    double sigma = 1.0;         // blob size, restricted to [0.5, 2.0]
    double contrast = 0.5;      // peak amplitude over the background, (0, 1]
};

// Suppresses a target's contrast over an inclusive frame span, making it
// locally hard to see while distant frames stay informative.
struct DimEvent {
    int target = 0;
    int first = 0, last = 0;
    double factor = 0.0;  // contrast multiplier in [0, 1]
};

struct SceneSpec {
    int seq_id = 0;
    int frames = 10;
    int h = 64, w = 64;
    double base = 0.3;        // background level
    double grad_amp = 0.1;    // linear gradient amplitude across the frame
    double noise_amp = 0.02;  // std of the (pre-smoothing) background noise
    double snr_floor = 3.0;   // asserted local contrast/noise ratio (no-dim frames)
    std::uint64_t seed = 1;
    std::vector<TargetSpec> targets;
    std::vector<DimEvent> dim_events;
};

struct TargetAnn {
    int target = 0;
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    bool visible = true;  // dim events keep true: the target exists, it is just faint
};
using FrameAnns = std::vector<TargetAnn>;

struct Sequence {
    SceneSpec spec;
    std::vector<Tensor> frames;   // (1,H,W) in [0,1], quantized to the 16-bit grid
    std::vector<FrameAnns> anns;  // one list per frame
};

std::pair<double, double> target_center(const TargetSpec& t, int frame);

// Integer annotation box: side = max(7, round(6*sigma)), centered on the
// sub-pixel center, clipped to the frame. Always contains the true center.
void target_box(const TargetSpec& t, int frame, int h, int w, int& x1, int& y1, int& x2,
                int& y2);

// Deterministic in spec.seed; every random draw comes from a counter-based
// stream keyed by (sequence, frame, purpose).
Sequence generate_sequence(const SceneSpec& spec);

// Boxes of the visible targets in one frame's annotation list.
std::vector<Box> gt_boxes(const FrameAnns& anns);

// Layout: <root>/<seq_id>/frames/%06d.png, <root>/<seq_id>/ann.txt and a
// <root>/manifest.txt recording lengths plus the generating specs.
void write_dataset(const std::string& root, const std::vector<Sequence>& seqs);
std::vector<Sequence> read_dataset(const std::string& root);

}  // namespace bird::synth
