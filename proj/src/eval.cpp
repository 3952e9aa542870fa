#include "bird/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bird/detection.hpp"
#include "bird/error.hpp"
#include "bird/png_io.hpp"

namespace bird::eval {

namespace {

std::string fmt(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

// Match one prediction against the unmatched GTs of its frame; returns the
// matched index or -1. Scanning in index order with a strict '>' makes exact
// IoU ties fall to the lower GT index.
int match_one(const Box& pred, const std::vector<Box>& gts, const std::vector<char>& taken,
              double iou_thresh) {
    int best = -1;
    double best_iou = 0.0;
    for (size_t j = 0; j < gts.size(); ++j) {
        if (taken[j]) continue;
        const double v = iou(pred, gts[j]);
        if (v >= iou_thresh && v > best_iou) {
            best = static_cast<int>(j);
            best_iou = v;
        }
    }
    return best;
}

}  // namespace

MatchCounts match_detections(std::vector<Detection> preds, const std::vector<Box>& gts,
                             double iou_thresh) {
    std::stable_sort(preds.begin(), preds.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<char> taken(gts.size(), 0);
    MatchCounts c;
    for (const Detection& p : preds) {
        const int j = match_one(p.box, gts, taken, iou_thresh);
        if (j >= 0) {
            taken[static_cast<size_t>(j)] = 1;
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    c.fn = static_cast<int>(gts.size()) - c.tp;
    return c;
}

Prf1 prf1(const MatchCounts& c) {
    Prf1 r;
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    if (r.precision + r.recall > 0.0)
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

ApResult average_precision(const std::vector<EvalFrame>& frames, double iou_thresh) {
    long total_gt = 0;
    for (const EvalFrame& f : frames) total_gt += static_cast<long>(f.gts.size());
    if (total_gt == 0)
        throw InputError("average_precision: no ground-truth boxes in the evaluation set");

    struct Pooled {
        double score;
        size_t frame;
        const Detection* det;
    };
    std::vector<Pooled> pool;
    for (size_t fi = 0; fi < frames.size(); ++fi)
        for (const Detection& d : frames[fi].preds) pool.push_back({d.score, fi, &d});
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Pooled& a, const Pooled& b) { return a.score > b.score; });

    std::vector<std::vector<char>> taken(frames.size());
    for (size_t fi = 0; fi < frames.size(); ++fi) taken[fi].assign(frames[fi].gts.size(), 0);

    ApResult res;
    long tp = 0, fp = 0;
    for (const Pooled& p : pool) {
        const int j = match_one(p.det->box, frames[p.frame].gts, taken[p.frame], iou_thresh);
        if (j >= 0) {
            taken[p.frame][static_cast<size_t>(j)] = 1;
            ++tp;
        } else {
            ++fp;
        }
        res.points.push_back({static_cast<double>(tp) / total_gt,
                              static_cast<double>(tp) / (tp + fp)});
    }

    // Precision envelope (max precision at recall >= r), integrated over the
    // recall increments.
    const size_t n = res.points.size();
    std::vector<double> env(n, 0.0);
    double run = 0.0;
    for (size_t i = n; i-- > 0;) {
        run = std::max(run, res.points[i].precision);
        env[i] = run;
    }
    double ap = 0.0, last_recall = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ap += (res.points[i].recall - last_recall) * env[i];
        last_recall = res.points[i].recall;
    }
    res.ap50 = ap;
    return res;
}

void write_predictions(const std::string& path, const std::vector<FramePreds>& preds) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open for writing: " + path);
    out << "bird-preds 1\n";
    for (const FramePreds& fp : preds) {
        out << fp.seq << " " << fp.frame << " " << fp.dets.size();
        for (const Detection& d : fp.dets)
            out << " " << fmt(d.box.x1) << " " << fmt(d.box.y1) << " " << fmt(d.box.x2) << " "
                << fmt(d.box.y2) << " " << fmt(d.score);
        out << "\n";
    }
    if (!out) throw InputError("write failed: " + path);
}

std::vector<FramePreds> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);
    long ln = 0;
    std::string line;
    if (!std::getline(in, line) || line != "bird-preds 1")
        throw parse_error(path, 1, "missing 'bird-preds 1' header");
    ln = 1;

    auto to_int = [&path](const std::string& tok, long l) {
        try {
            size_t used = 0;
            const long v = std::stol(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw parse_error(path, l, "expected integer, got '" + tok + "'");
        }
    };
    auto to_real = [&path](const std::string& tok, long l) {
        try {
            size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw parse_error(path, l, "expected number, got '" + tok + "'");
        }
    };

    std::vector<FramePreds> out;
    while (std::getline(in, line)) {
        ++ln;
        std::istringstream ss(line);
        std::vector<std::string> tk;
        std::string t;
        while (ss >> t) tk.push_back(t);
        if (tk.empty()) continue;
        if (tk.size() < 3) throw parse_error(path, ln, "expected '<seq> <frame> <n> ...'");
        FramePreds fp;
        fp.seq = static_cast<int>(to_int(tk[0], ln));
        fp.frame = static_cast<int>(to_int(tk[1], ln));
        const long n = to_int(tk[2], ln);
        if (n < 0 || tk.size() != 3 + static_cast<size_t>(n) * 5)
            throw parse_error(path, ln, "expected " + std::to_string(3 + n * 5) +
                                            " fields for " + std::to_string(n) +
                                            " detections, got " + std::to_string(tk.size()));
        for (long i = 0; i < n; ++i) {
            const size_t b = 3 + static_cast<size_t>(i) * 5;
            Detection d;
            d.box = {to_real(tk[b], ln), to_real(tk[b + 1], ln), to_real(tk[b + 2], ln),
                     to_real(tk[b + 3], ln)};
            d.score = to_real(tk[b + 4], ln);
            fp.dets.push_back(d);
        }
        out.push_back(std::move(fp));
    }
    return out;
}

BenchResult benchmark(BirdModel& model, const std::vector<Tensor>& seq, BenchMode mode, int n) {
    if (seq.empty()) throw InputError("benchmark: empty sequence");
    if (n < 1) throw InputError("benchmark: clip length must be >= 1");
    const int t = static_cast<int>(seq.size());
    const int fh = seq[0].dim(1), fw = seq[0].dim(2);

    model.reset_counters();
    BenchResult r;
    const auto t0 = std::chrono::steady_clock::now();

    auto emit = [&](Graph& g, NodeId fused) {
        const detection::HeadNodes h = detection::head_forward(g, model.params(), fused);
        detection::decode(g.val(h.reg), g.val(h.obj), g.val(h.cls), detection::kStride, 0.3,
                          0.5, fh, fw);
        ++r.frames;
    };

    if (mode == BenchMode::recursive) {
        // One visit per frame: clips back to back, the last one left short.
        for (int start = 0; start < t; start += n) {
            const int len = std::min(n, t - start);
            ClipBatch clip;
            clip.frames.assign(seq.begin() + start, seq.begin() + start + len);
            clip.original_length = len;
            Graph g;
            const ClipFeatures cf = model.forward_clip(g, clip);
            for (int i = 0; i < len; ++i) emit(g, cf.fused[static_cast<size_t>(i)]);
        }
    } else {
        // n visits per frame: a full window is recomputed for every output.
        for (int i = 0; i < t; ++i) {
            const int len = std::min(n, t);
            const int start = std::clamp(i - n / 2, 0, t - len);
            ClipBatch clip;
            clip.frames.assign(seq.begin() + start, seq.begin() + start + len);
            clip.original_length = len;
            Graph g;
            const ClipFeatures cf = model.forward_clip(g, clip);
            emit(g, cf.fused[static_cast<size_t>(i - start)]);
        }
    }

    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.fps = r.seconds > 0.0 ? r.frames / r.seconds : 0.0;
    r.backbone_forwards = model.counters().backbone;
    return r;
}

namespace {

void draw_line(std::vector<std::uint8_t>& img, int h, int w, int x0, int y0, int x1, int y1,
               std::uint8_t cr, std::uint8_t cg, std::uint8_t cb) {
    auto put = [&](int x, int y) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const size_t i = (static_cast<size_t>(y) * w + x) * 3;
        img[i] = cr;
        img[i + 1] = cg;
        img[i + 2] = cb;
    };
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

}  // namespace

void write_pr_plot(const std::string& path, const std::vector<PrPoint>& points) {
    const int w = 360, h = 360, m = 30;  // canvas and margin
    std::vector<std::uint8_t> img(static_cast<size_t>(w) * h * 3, 255);

    auto px = [&](double recall) { return m + static_cast<int>(std::lround(recall * (w - 2 * m))); };
    auto py = [&](double prec) { return h - m - static_cast<int>(std::lround(prec * (h - 2 * m))); };

    // Frame and quarter gridlines.
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        draw_line(img, h, w, px(v), py(0), px(v), py(1), 220, 220, 220);
        draw_line(img, h, w, px(0), py(v), px(1), py(v), 220, 220, 220);
    }
    draw_line(img, h, w, px(0), py(0), px(1), py(0), 0, 0, 0);
    draw_line(img, h, w, px(0), py(0), px(0), py(1), 0, 0, 0);

    // Envelope in blue, raw sweep in red.
    std::vector<double> env(points.size());
    double run = 0.0;
    for (size_t i = points.size(); i-- > 0;) {
        run = std::max(run, points[i].precision);
        env[i] = run;
    }
    for (size_t i = 0; i + 1 < points.size(); ++i) {
        draw_line(img, h, w, px(points[i].recall), py(env[i]), px(points[i + 1].recall),
                  py(env[i + 1]), 60, 60, 200);
        draw_line(img, h, w, px(points[i].recall), py(points[i].precision),
                  px(points[i + 1].recall), py(points[i + 1].precision), 200, 60, 60);
    }
    for (const PrPoint& p : points) {
        for (int dy = -1; dy <= 1; ++dy)
            draw_line(img, h, w, px(p.recall) - 1, py(p.precision) + dy, px(p.recall) + 1,
                      py(p.precision) + dy, 200, 60, 60);
    }
    png_io::write_rgb8(path, h, w, img);
}

}  // namespace bird::eval
