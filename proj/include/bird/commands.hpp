#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bird/config.hpp"
#include "bird/eval.hpp"
#include "bird/synthdata.hpp"
#include "bird/trainer.hpp"

namespace bird::cmd {

// ---- synth -----------------------------------------------------------------
struct SynthArgs {
    std::string out;
    int seqs = 4;
    int len = 40;
    int size = 64;
    int targets = 1;
    std::uint64_t seed = 7;
    double noise = 0.02;
    double contrast_min = 0.35, contrast_max = 0.7;
    int dim_frames = 0;       // > 0: one dim event of this many frames per target
    double dim_factor = 0.1;  // contrast multiplier inside the event
};
// Generates and writes the dataset; returns what was written.
std::vector<synth::Sequence> synth(const SynthArgs& args);

// ---- train -----------------------------------------------------------------
// Reads cfg.data, trains under cfg.out (config.txt, loss.log, ckpt.bin).
TrainResult train(RunConfig cfg);

// ---- infer -----------------------------------------------------------------
struct InferResult {
    int frames = 0;
    std::string preds_path;
};
// Loads cfg.ckpt, applies the ablation flags, runs clips of cfg.n_infer over
// cfg.data (padding the tail, truncating padded outputs) and writes the
// prediction dump to cfg.out.
InferResult infer(const RunConfig& cfg);

// ---- eval ------------------------------------------------------------------
struct EvalArgs {
    std::string preds;
    std::string data;
    std::string out;  // optional directory for metrics.txt + pr.png
    double iou_thresh = 0.5;
};
struct MetricReport {
    eval::MatchCounts counts;
    double precision = 0.0, recall = 0.0, f1 = 0.0, ap50 = 0.0;
    std::vector<eval::PrPoint> points;
};
MetricReport evaluate(const EvalArgs& args);

// ---- bench -----------------------------------------------------------------
struct BenchArgs {
    std::string ckpt;  // empty: fresh weights from seed
    std::uint64_t seed = 1;
    int frames = 40;
    int n = 5;
    int size = 64;
    std::string mode = "both";  // recursive | sliding | both
    std::string out;            // optional report path
};
struct BenchReport {
    bool ran_recursive = false, ran_sliding = false;
    eval::BenchResult recursive, sliding;
    double fps_ratio = 0.0;  // recursive / sliding when both ran
};
BenchReport bench(const BenchArgs& args);

}  // namespace bird::cmd
