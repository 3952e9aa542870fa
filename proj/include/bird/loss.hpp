#pragma once

#include <vector>

#include "bird/detection.hpp"
#include "bird/model.hpp"

namespace bird {

struct LossConfig {
    double lambda = 5.0;  // weight of the IoU regression term inside L_D
    double eta = 1.0;     // weight of the STF term in the clip objective
    bool enable_stf = true;
    int stride = detection::kStride;
};

struct FrameLossReport {
    detection::FrameLoss det;
    NodeId stf = -1;  // scalar L_{i,STF} (sum of both directions); -1 if STF off
    double det_value = 0.0;
    double stf_value = 0.0;
};

struct ClipLoss {
    NodeId total = -1;  // scalar: sum over non-padded frames of L_D + eta * L_STF
    std::vector<FrameLossReport> frames;
    double total_value = 0.0;
    double det_sum = 0.0;
    double stf_sum = 0.0;
};

// Joint objective over one clip. Only the first original_length frames
// contribute; padded frames are excluded from both loss families.
ClipLoss clip_loss(Graph& g, BirdModel& model, const ClipFeatures& cf,
                   const std::vector<std::vector<Box>>& gt, int original_length, int frame_h,
                   int frame_w, const LossConfig& lc);

// Plain arithmetic form of the clip objective for reports.
double total_loss_value(const std::vector<double>& det_parts,
                        const std::vector<double>& stf_parts, double eta);

}  // namespace bird
