#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "bird/commands.hpp"
#include "bird/config.hpp"

namespace {

// Flags the user actually passed override values loaded from --config.
void apply_train_overrides(const CLI::App* sub, const bird::RunConfig& cli,
                           bird::RunConfig& cfg) {
    if (sub->count("--data")) cfg.data = cli.data;
    if (sub->count("--out")) cfg.out = cli.out;
    if (sub->count("--ckpt")) cfg.ckpt = cli.ckpt;
    if (sub->count("--steps")) cfg.steps = cli.steps;
    if (sub->count("--epochs")) cfg.epochs = cli.epochs;
    if (sub->count("--batch")) cfg.batch = cli.batch;
    if (sub->count("--n-train")) cfg.n_train = cli.n_train;
    if (sub->count("--n-infer")) cfg.n_infer = cli.n_infer;
    if (sub->count("--size")) cfg.size = cli.size;
    if (sub->count("--lr")) cfg.lr = cli.lr;
    if (sub->count("--lambda")) cfg.lambda = cli.lambda;
    if (sub->count("--eta")) cfg.eta = cli.eta;
    if (sub->count("--score-thresh")) cfg.score_thresh = cli.score_thresh;
    if (sub->count("--nms-iou")) cfg.nms_iou = cli.nms_iou;
    if (sub->count("--seed")) cfg.seed = cli.seed;
}

void add_ablation_flags(CLI::App* sub, bool& no_bp, bool& no_fp, bool& no_ltmf, bool& no_gtmf,
                        bool& no_stf) {
    sub->add_flag("--no-bp", no_bp, "disable the backward propagation branch");
    sub->add_flag("--no-fp", no_fp, "disable the forward propagation branch");
    sub->add_flag("--no-ltmf", no_ltmf, "replace local fusion with a plain conv");
    sub->add_flag("--no-gtmf", no_gtmf, "pass local features through unfused");
    sub->add_flag("--no-stf", no_stf, "drop the temporal alignment loss");
}

void apply_ablation(bird::RunConfig& cfg, bool no_bp, bool no_fp, bool no_ltmf, bool no_gtmf,
                    bool no_stf) {
    if (no_bp) cfg.enable_bp = false;
    if (no_fp) cfg.enable_fp = false;
    if (no_ltmf) cfg.enable_ltmf = false;
    if (no_gtmf) cfg.enable_gtmf = false;
    if (no_stf) cfg.enable_stf = false;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bird: bidirectional temporal propagation detector for infrared small targets"};
    app.require_subcommand(1);

    // synth ------------------------------------------------------------------
    bird::cmd::SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", sa.out, "dataset root")->required();
    synth->add_option("--seqs", sa.seqs, "number of sequences");
    synth->add_option("--len", sa.len, "frames per sequence");
    synth->add_option("--size", sa.size, "frame side in pixels");
    synth->add_option("--targets", sa.targets, "targets per sequence");
    synth->add_option("--seed", sa.seed, "master seed");
    synth->add_option("--noise", sa.noise, "background noise amplitude");
    synth->add_option("--contrast-min", sa.contrast_min, "minimum target contrast");
    synth->add_option("--contrast-max", sa.contrast_max, "maximum target contrast");
    synth->add_option("--dim-frames", sa.dim_frames, "dim-event length (0 disables)");
    synth->add_option("--dim-factor", sa.dim_factor, "contrast multiplier inside dim events");
    synth->callback([&] { bird::cmd::synth(sa); });

    // train --------------------------------------------------------------------
    bird::RunConfig tc;
    std::string train_config;
    bool tn_bp = false, tn_fp = false, tn_ltmf = false, tn_gtmf = false, tn_stf = false;
    CLI::App* train = app.add_subcommand("train", "train on a synthetic dataset");
    train->add_option("--config", train_config, "load a config file first");
    train->add_option("--data", tc.data, "dataset root");
    train->add_option("--out", tc.out, "run directory");
    train->add_option("--ckpt", tc.ckpt, "(unused by train; kept for config round-trips)");
    train->add_option("--steps", tc.steps, "optimization steps");
    train->add_option("--epochs", tc.epochs, "epoch budget (provenance)");
    train->add_option("--batch", tc.batch, "clips per step");
    train->add_option("--n-train", tc.n_train, "training clip length");
    train->add_option("--n-infer", tc.n_infer, "inference clip length (recorded)");
    train->add_option("--size", tc.size, "frame side (recorded)");
    train->add_option("--lr", tc.lr, "learning rate");
    train->add_option("--lambda", tc.lambda, "IoU-loss weight");
    train->add_option("--eta", tc.eta, "alignment-loss weight");
    train->add_option("--score-thresh", tc.score_thresh, "decode score threshold");
    train->add_option("--nms-iou", tc.nms_iou, "NMS IoU threshold");
    train->add_option("--seed", tc.seed, "run seed");
    add_ablation_flags(train, tn_bp, tn_fp, tn_ltmf, tn_gtmf, tn_stf);
    train->callback([&] {
        bird::RunConfig cfg =
            train_config.empty() ? bird::RunConfig{} : bird::load_config(train_config);
        apply_train_overrides(train, tc, cfg);
        apply_ablation(cfg, tn_bp, tn_fp, tn_ltmf, tn_gtmf, tn_stf);
        const bird::TrainResult r = bird::cmd::train(cfg);
        std::printf("trained %d steps: loss %.6g -> %.6g\nlog: %s\ncheckpoint: %s\n", r.steps,
                    r.initial_loss, r.final_loss, r.log_path.c_str(), r.ckpt_path.c_str());
    });

    // infer --------------------------------------------------------------------
    bird::RunConfig ic;
    std::string infer_config;
    bool in_bp = false, in_fp = false, in_ltmf = false, in_gtmf = false, in_stf = false;
    CLI::App* infer = app.add_subcommand("infer", "run detection over a dataset");
    infer->add_option("--config", infer_config, "load a config file first");
    infer->add_option("--ckpt", ic.ckpt, "checkpoint path");
    infer->add_option("--data", ic.data, "dataset root");
    infer->add_option("--out", ic.out, "prediction dump path");
    infer->add_option("--n-infer", ic.n_infer, "inference clip length");
    infer->add_option("--score-thresh", ic.score_thresh, "decode score threshold");
    infer->add_option("--nms-iou", ic.nms_iou, "NMS IoU threshold");
    add_ablation_flags(infer, in_bp, in_fp, in_ltmf, in_gtmf, in_stf);
    infer->callback([&] {
        bird::RunConfig cfg =
            infer_config.empty() ? bird::RunConfig{} : bird::load_config(infer_config);
        if (infer->count("--ckpt")) cfg.ckpt = ic.ckpt;
        if (infer->count("--data")) cfg.data = ic.data;
        if (infer->count("--out")) cfg.out = ic.out;
        if (infer->count("--n-infer")) cfg.n_infer = ic.n_infer;
        if (infer->count("--score-thresh")) cfg.score_thresh = ic.score_thresh;
        if (infer->count("--nms-iou")) cfg.nms_iou = ic.nms_iou;
        apply_ablation(cfg, in_bp, in_fp, in_ltmf, in_gtmf, in_stf);
        const bird::cmd::InferResult r = bird::cmd::infer(cfg);
        std::printf("wrote %d frames of predictions to %s\n", r.frames, r.preds_path.c_str());
    });

    // eval ---------------------------------------------------------------------
    bird::cmd::EvalArgs ea;
    CLI::App* evalc = app.add_subcommand("eval", "score predictions against ground truth");
    evalc->add_option("--preds", ea.preds, "prediction dump")->required();
    evalc->add_option("--data", ea.data, "dataset root")->required();
    evalc->add_option("--out", ea.out, "directory for metrics.txt and pr.png");
    evalc->add_option("--iou", ea.iou_thresh, "matching IoU threshold");
    evalc->callback([&] {
        const bird::cmd::MetricReport r = bird::cmd::evaluate(ea);
        std::printf("tp %d fp %d fn %d\nprecision %.4f recall %.4f f1 %.4f ap50 %.4f\n",
                    r.counts.tp, r.counts.fp, r.counts.fn, r.precision, r.recall, r.f1, r.ap50);
    });

    // bench --------------------------------------------------------------------
    bird::cmd::BenchArgs ba;
    CLI::App* bench = app.add_subcommand("bench", "recursive vs sliding-window throughput");
    bench->add_option("--ckpt", ba.ckpt, "checkpoint (omit for random weights)");
    bench->add_option("--seed", ba.seed, "seed for random weights and the test sequence");
    bench->add_option("--frames", ba.frames, "sequence length");
    bench->add_option("--n", ba.n, "clip / window length");
    bench->add_option("--size", ba.size, "frame side in pixels");
    bench->add_option("--mode", ba.mode, "recursive | sliding | both");
    bench->add_option("--out", ba.out, "report file");
    bench->callback([&] { bird::cmd::bench(ba); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
