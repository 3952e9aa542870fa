#pragma once

#include <string>
#include <vector>

#include "bird/config.hpp"
#include "bird/model.hpp"
#include "bird/synthdata.hpp"

namespace bird {

struct TrainResult {
    double initial_loss = 0.0;  // batch-mean clip objective at the first step
    double final_loss = 0.0;    // ... and at the last
    int steps = 0;
    std::string log_path;
    std::string ckpt_path;
};

// Optimizes the clip objective over randomly sampled clips of cfg.n_train
// frames. Writes '<step> <L> <L_D> <L_STF>' per step to <run_dir>/loss.log
// and the final weights to <run_dir>/ckpt.bin. Deterministic in cfg.seed.
TrainResult train_model(BirdModel& model, const std::vector<synth::Sequence>& data,
                        const RunConfig& cfg, const std::string& run_dir);

}  // namespace bird
