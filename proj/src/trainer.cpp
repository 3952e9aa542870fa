#include "bird/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bird/adam.hpp"
#include "bird/detection.hpp"
#include "bird/error.hpp"
#include "bird/loss.hpp"
#include "bird/rng.hpp"

namespace bird {

TrainResult train_model(BirdModel& model, const std::vector<synth::Sequence>& data,
                        const RunConfig& cfg, const std::string& run_dir) {
    validate(cfg);
    if (data.empty()) throw InputError("train: empty dataset");
    const int fh = data[0].spec.h, fw = data[0].spec.w;
    for (const synth::Sequence& s : data) {
        if (s.spec.h != fh || s.spec.w != fw)
            throw InputError("train: sequences disagree on frame size");
        if (s.frames.empty()) throw InputError("train: sequence " +
                                               std::to_string(s.spec.seq_id) + " has no frames");
    }
    if (fh % 8 != 0 || fw % 8 != 0)
        throw InputError("train: frame size must be divisible by 8, got " +
                         std::to_string(fw) + "x" + std::to_string(fh));

    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) throw InputError("cannot create run directory " + run_dir + ": " + ec.message());

    TrainResult res;
    res.log_path = run_dir + "/loss.log";
    res.ckpt_path = run_dir + "/ckpt.bin";
    std::ofstream log(res.log_path);
    if (!log) throw InputError("cannot open for writing: " + res.log_path);

    LossConfig lc;
    lc.lambda = cfg.lambda;
    lc.eta = cfg.eta;
    lc.enable_stf = cfg.enable_stf;
    lc.stride = detection::kStride;

    Adam adam(model.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    SplitMix64 sampler(substream(cfg.seed, 0x747261696eULL, 0, 0));
    const int n = cfg.n_train;

    for (int step = 1; step <= cfg.steps; ++step) {
        model.params().zero_grads();
        double loss_sum = 0.0, det_sum = 0.0, stf_sum = 0.0;

        for (int b = 0; b < cfg.batch; ++b) {
            const size_t si = sampler.below(data.size());
            const synth::Sequence& sq = data[si];
            const int t = static_cast<int>(sq.frames.size());
            const int len = std::min(n, t);
            const int start =
                t > len ? static_cast<int>(sampler.below(static_cast<size_t>(t - len) + 1)) : 0;

            std::vector<Tensor> chunk(sq.frames.begin() + start,
                                      sq.frames.begin() + start + len);
            const ClipBatch clip = pad_clip(chunk, n);
            std::vector<std::vector<Box>> gts;
            for (int i = 0; i < len; ++i)
                gts.push_back(synth::gt_boxes(sq.anns[static_cast<size_t>(start + i)]));

            Graph g;
            const ClipFeatures cf = model.forward_clip(g, clip);
            const ClipLoss cl = clip_loss(g, model, cf, gts, len, fh, fw, lc);
            g.backward(cl.total);
            loss_sum += cl.total_value;
            det_sum += cl.det_sum;
            stf_sum += cl.stf_sum;
        }

        adam.step(1.0 / cfg.batch);

        const double l = loss_sum / cfg.batch;
        char line[140];
        std::snprintf(line, sizeof line, "%d %.17g %.17g %.17g\n", step, l,
                      det_sum / cfg.batch, stf_sum / cfg.batch);
        log << line;
        log.flush();  // keep the log current for anyone watching a long run
        if (step == 1) res.initial_loss = l;
        res.final_loss = l;
    }
    res.steps = cfg.steps;
    log.flush();
    if (!log) throw InputError("write failed: " + res.log_path);

    model.save(res.ckpt_path);
    return res;
}

}  // namespace bird
