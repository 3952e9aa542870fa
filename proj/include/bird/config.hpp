#pragma once

#include <cstdint>
#include <string>

namespace bird {

// Everything a run needs, serializable as flat key=value text so a finished
// run can be reproduced from the config written next to its outputs.
struct RunConfig {
    int n_train = 5;   // training clip length (>= 3: LTMF wants two neighbors)
    int n_infer = 8;   // inference clip length (>= 1)
    int size = 64;     // frame side used by synthesis/benchmarks
    int epochs = 20;   // provenance at full scale; desk-scale runs use 'steps'
    int steps = 200;   // optimization steps
    int batch = 2;     // clips per step
    double lr = 2e-4;
    double lambda = 5.0;  // IoU-term weight inside the detection loss
    double eta = 1.0;     // alignment-term weight in the clip objective
    double score_thresh = 0.05;
    double nms_iou = 0.5;
    bool enable_bp = true;
    bool enable_fp = true;
    bool enable_ltmf = true;
    bool enable_gtmf = true;
    bool enable_stf = true;
    std::uint64_t seed = 1;
    std::string data;  // dataset root
    std::string out;   // run directory / output path
    std::string ckpt;  // checkpoint path (inference, benchmark)
};

// ConfigError on violated invariants (n_train < 3, n_infer < 1, ...).
void validate(const RunConfig& cfg);

void save_config(const std::string& path, const RunConfig& cfg);
RunConfig load_config(const std::string& path);

// BIRD_SEED in the environment overrides cfg.seed.
RunConfig with_env_overrides(RunConfig cfg);

}  // namespace bird
