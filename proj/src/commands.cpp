#include "bird/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "bird/detection.hpp"
#include "bird/error.hpp"
#include "bird/rng.hpp"

namespace fs = std::filesystem;

namespace bird::cmd {

std::vector<synth::Sequence> synth(const SynthArgs& a) {
    if (a.len < 1) throw ConfigError("--len must be >= 1");
    if (a.seqs < 1) throw ConfigError("--seqs must be >= 1");
    if (a.size < 16) throw ConfigError("--size must be >= 16");
    if (a.targets < 1) throw ConfigError("--targets must be >= 1");
    if (!(a.contrast_min > 0.0 && a.contrast_min <= a.contrast_max && a.contrast_max <= 1.0))
        throw ConfigError("contrast range must satisfy 0 < min <= max <= 1");
    if (a.dim_frames < 0 || (a.dim_frames > 0 && a.len < a.dim_frames + 2))
        throw ConfigError("--dim-frames needs a sequence at least 2 frames longer");
    if (a.dim_factor < 0.0 || a.dim_factor > 1.0)
        throw ConfigError("--dim-factor must be in [0, 1]");
    if (a.out.empty()) throw ConfigError("--out is required");

    std::vector<synth::Sequence> seqs;
    for (int s = 0; s < a.seqs; ++s) {
        synth::SceneSpec sp;
        sp.seq_id = s;
        sp.frames = a.len;
        sp.h = sp.w = a.size;
        sp.noise_amp = a.noise;
        sp.seed = a.seed;

        // Placement/motion draws come from a per-sequence stream so adding
        // sequences never reshuffles existing ones.
        SplitMix64 rng(substream(a.seed, 0x706c616365ULL, static_cast<std::uint64_t>(s), 0));
        const double lo = 8.0, hi = static_cast<double>(a.size) - 9.0;
        const double span = std::max(1, a.len - 1);
        for (int k = 0; k < a.targets; ++k) {
            synth::TargetSpec t;
            t.sigma = rng.uniform(0.7, 1.5);
            t.contrast = rng.uniform(a.contrast_min, a.contrast_max);
            t.x0 = rng.uniform(lo, hi);
            t.y0 = rng.uniform(lo, hi);
            // Any velocity in this window keeps the whole track inside.
            t.vx = rng.uniform((lo - t.x0) / span, (hi - t.x0) / span);
            t.vy = rng.uniform((lo - t.y0) / span, (hi - t.y0) / span);
            sp.targets.push_back(t);

            if (a.dim_frames > 0) {
                synth::DimEvent d;
                d.target = k;
                d.first = 1 + static_cast<int>(
                                  rng.below(static_cast<std::uint64_t>(a.len - a.dim_frames - 1)));
                d.last = d.first + a.dim_frames - 1;
                d.factor = a.dim_factor;
                sp.dim_events.push_back(d);
            }
        }
        seqs.push_back(synth::generate_sequence(sp));
    }
    synth::write_dataset(a.out, seqs);
    return seqs;
}

TrainResult train(RunConfig cfg) {
    cfg = with_env_overrides(cfg);
    validate(cfg);
    if (cfg.data.empty()) throw ConfigError("train: data path is required");
    if (cfg.out.empty()) throw ConfigError("train: output directory is required");

    const std::vector<synth::Sequence> data = synth::read_dataset(cfg.data);

    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) throw InputError("cannot create run directory " + cfg.out + ": " + ec.message());
    save_config(cfg.out + "/config.txt", cfg);

    ModelConfig mc;
    mc.n_train = cfg.n_train;
    mc.num_classes = 1;
    mc.enable_bp = cfg.enable_bp;
    mc.enable_fp = cfg.enable_fp;
    mc.enable_ltmf = cfg.enable_ltmf;
    mc.enable_gtmf = cfg.enable_gtmf;
    BirdModel model(cfg.seed, mc);

    return train_model(model, data, cfg, cfg.out);
}

InferResult infer(const RunConfig& cfg) {
    if (cfg.n_infer < 1) throw ConfigError("n_infer must be >= 1");
    if (cfg.ckpt.empty()) throw ConfigError("infer: checkpoint path is required");
    if (cfg.out.empty()) throw ConfigError("infer: output path is required");

    BirdModel model = BirdModel::load(cfg.ckpt);
    model.cfg.enable_bp = cfg.enable_bp;
    model.cfg.enable_fp = cfg.enable_fp;
    model.cfg.enable_ltmf = cfg.enable_ltmf;
    model.cfg.enable_gtmf = cfg.enable_gtmf;

    const std::vector<synth::Sequence> data = synth::read_dataset(cfg.data);
    const int n = cfg.n_infer;

    std::vector<eval::FramePreds> preds;
    for (const synth::Sequence& sq : data) {
        const int t = static_cast<int>(sq.frames.size());
        const int fh = sq.spec.h, fw = sq.spec.w;
        for (int start = 0; start < t; start += n) {
            const int len = std::min(n, t - start);
            std::vector<Tensor> chunk(sq.frames.begin() + start,
                                      sq.frames.begin() + start + len);
            const ClipBatch clip = pad_clip(chunk, n);
            Graph g;
            const ClipFeatures cf = model.forward_clip(g, clip);
            for (int i = 0; i < len; ++i) {  // padded tail frames are dropped
                const detection::HeadNodes h =
                    detection::head_forward(g, model.params(), cf.fused[static_cast<size_t>(i)]);
                eval::FramePreds fp;
                fp.seq = sq.spec.seq_id;
                fp.frame = start + i;
                fp.dets = detection::decode(g.val(h.reg), g.val(h.obj), g.val(h.cls),
                                            detection::kStride, cfg.score_thresh, cfg.nms_iou,
                                            fh, fw);
                preds.push_back(std::move(fp));
            }
        }
    }
    eval::write_predictions(cfg.out, preds);
    return {static_cast<int>(preds.size()), cfg.out};
}

MetricReport evaluate(const EvalArgs& args) {
    if (args.preds.empty() || args.data.empty())
        throw ConfigError("eval: prediction and dataset paths are required");
    const std::vector<eval::FramePreds> dump = eval::read_predictions(args.preds);
    const std::vector<synth::Sequence> data = synth::read_dataset(args.data);

    std::map<std::pair<int, int>, const eval::FramePreds*> by_frame;
    for (const eval::FramePreds& fp : dump)
        if (!by_frame.emplace(std::make_pair(fp.seq, fp.frame), &fp).second)
            throw InputError("duplicate prediction record for sequence " +
                             std::to_string(fp.seq) + " frame " + std::to_string(fp.frame));

    std::map<std::pair<int, int>, bool> known;
    std::vector<eval::EvalFrame> frames;
    MetricReport rep;
    for (const synth::Sequence& sq : data) {
        for (int t = 0; t < static_cast<int>(sq.frames.size()); ++t) {
            eval::EvalFrame ef;
            ef.gts = synth::gt_boxes(sq.anns[static_cast<size_t>(t)]);
            const auto it = by_frame.find({sq.spec.seq_id, t});
            if (it != by_frame.end()) ef.preds = it->second->dets;
            known[{sq.spec.seq_id, t}] = true;
            const eval::MatchCounts c =
                eval::match_detections(ef.preds, ef.gts, args.iou_thresh);
            rep.counts.tp += c.tp;
            rep.counts.fp += c.fp;
            rep.counts.fn += c.fn;
            frames.push_back(std::move(ef));
        }
    }
    for (const eval::FramePreds& fp : dump)
        if (!known.count({fp.seq, fp.frame}))
            throw InputError("prediction for unknown sequence " + std::to_string(fp.seq) +
                             " frame " + std::to_string(fp.frame));

    const eval::Prf1 p = eval::prf1(rep.counts);
    rep.precision = p.precision;
    rep.recall = p.recall;
    rep.f1 = p.f1;
    const eval::ApResult ap = eval::average_precision(frames, args.iou_thresh);
    rep.ap50 = ap.ap50;
    rep.points = ap.points;

    if (!args.out.empty()) {
        std::error_code ec;
        fs::create_directories(args.out, ec);
        if (ec) throw InputError("cannot create " + args.out + ": " + ec.message());
        std::ofstream m(fs::path(args.out) / "metrics.txt");
        if (!m) throw InputError("cannot write metrics under " + args.out);
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "tp %d\nfp %d\nfn %d\nprecision %.17g\nrecall %.17g\nf1 %.17g\nap50 %.17g\n",
                      rep.counts.tp, rep.counts.fp, rep.counts.fn, rep.precision, rep.recall,
                      rep.f1, rep.ap50);
        m << buf;
        if (!m) throw InputError("write failed: metrics under " + args.out);
        eval::write_pr_plot((fs::path(args.out) / "pr.png").string(), rep.points);
    }
    return rep;
}

BenchReport bench(const BenchArgs& a) {
    if (a.frames < 1) throw ConfigError("--frames must be >= 1");
    if (a.n < 1) throw ConfigError("--n must be >= 1");
    if (a.size < 16 || a.size % 8 != 0)
        throw ConfigError("--size must be a multiple of 8 and >= 16");
    if (a.mode != "both" && a.mode != "recursive" && a.mode != "sliding")
        throw ConfigError("--mode must be recursive, sliding or both");

    BirdModel model = a.ckpt.empty() ? BirdModel(a.seed) : BirdModel::load(a.ckpt);

    // A single drifting target over a quiet background is enough load.
    synth::SceneSpec sp;
    sp.seq_id = 0;
    sp.frames = a.frames;
    sp.h = sp.w = a.size;
    sp.seed = a.seed;
    synth::TargetSpec t;
    t.x0 = a.size * 0.3;
    t.y0 = a.size * 0.4;
    const double span = std::max(1, a.frames - 1);
    t.vx = (a.size * 0.4) / span;
    t.vy = (a.size * 0.2) / span;
    sp.targets.push_back(t);
    const synth::Sequence seq = synth::generate_sequence(sp);

    BenchReport rep;
    if (a.mode != "sliding") {
        rep.recursive = eval::benchmark(model, seq.frames, eval::BenchMode::recursive, a.n);
        rep.ran_recursive = true;
    }
    if (a.mode != "recursive") {
        rep.sliding = eval::benchmark(model, seq.frames, eval::BenchMode::sliding, a.n);
        rep.ran_sliding = true;
    }
    if (rep.ran_recursive && rep.ran_sliding && rep.sliding.fps > 0.0)
        rep.fps_ratio = rep.recursive.fps / rep.sliding.fps;

    auto row = [](const char* name, const eval::BenchResult& r) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-10s frames %4d  backbone_forwards %6ld  seconds %.3f  fps %.2f\n",
                      name, r.frames, r.backbone_forwards, r.seconds, r.fps);
        return std::string(buf);
    };
    std::string report;
    if (rep.ran_recursive) report += row("recursive", rep.recursive);
    if (rep.ran_sliding) report += row("sliding", rep.sliding);
    if (rep.fps_ratio > 0.0) {
        char buf[80];
        std::snprintf(buf, sizeof buf, "fps_ratio %.2f\n", rep.fps_ratio);
        report += buf;
    }
    std::fputs(report.c_str(), stdout);
    if (!a.out.empty()) {
        std::ofstream f(a.out);
        if (!f) throw InputError("cannot open for writing: " + a.out);
        f << report;
    }
    return rep;
}

}  // namespace bird::cmd
