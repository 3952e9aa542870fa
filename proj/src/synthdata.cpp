#include "bird/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bird/error.hpp"
#include "bird/png_io.hpp"
#include "bird/rng.hpp"

namespace fs = std::filesystem;

namespace bird::synth {

namespace {

std::string fmt(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

// A target stays annotated while its center is at least 2 sigma inside the
// frame; beyond that it has "exited" and is neither rendered nor annotated.
bool target_active(const TargetSpec& t, int frame, int h, int w) {
    const auto [cx, cy] = target_center(t, frame);
    const double m = 2.0 * t.sigma;
    return cx >= m && cx <= w - 1 - m && cy >= m && cy <= h - 1 - m;
}

double dim_factor(const SceneSpec& s, int target, int frame) {
    double f = 1.0;
    for (const DimEvent& d : s.dim_events)
        if (d.target == target && frame >= d.first && frame <= d.last) f *= d.factor;
    return f;
}

void validate(const SceneSpec& s) {
    if (s.frames < 1) throw InputError("scene: frame count must be >= 1");
    if (s.h < 8 || s.w < 8)
        throw InputError("scene: frame size " + std::to_string(s.w) + "x" +
                         std::to_string(s.h) + " too small");
    if (s.base < 0.0 || s.grad_amp < 0.0 || s.noise_amp < 0.0)
        throw InputError("scene: background amplitudes must be non-negative");
    for (size_t i = 0; i < s.targets.size(); ++i) {
        const TargetSpec& t = s.targets[i];
        if (t.sigma < 0.5 || t.sigma > 2.0)
            throw InputError("target " + std::to_string(i) + ": sigma " + fmt(t.sigma) +
                             " outside [0.5, 2]");
        if (!(t.contrast > 0.0 && t.contrast <= 1.0))
            throw InputError("target " + std::to_string(i) + ": contrast " + fmt(t.contrast) +
                             " outside (0, 1]");
    }
    for (const DimEvent& d : s.dim_events) {
        if (d.target < 0 || d.target >= static_cast<int>(s.targets.size()))
            throw InputError("dim event references missing target " + std::to_string(d.target));
        if (d.first < 0 || d.last < d.first || d.last >= s.frames)
            throw InputError("dim event span [" + std::to_string(d.first) + "," +
                             std::to_string(d.last) + "] outside sequence");
        if (d.factor < 0.0 || d.factor > 1.0)
            throw InputError("dim event factor " + fmt(d.factor) + " outside [0, 1]");
    }
}

// 3x3 count-normalized box blur (applied twice below to smooth the noise).
std::vector<double> blur3(const std::vector<double>& in, int h, int w) {
    std::vector<double> out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    sum += in[static_cast<size_t>(yy) * w + xx];
                    ++cnt;
                }
            out[static_cast<size_t>(y) * w + x] = sum / cnt;
        }
    return out;
}

}  // namespace

std::pair<double, double> target_center(const TargetSpec& t, int frame) {
    const double s = static_cast<double>(frame);
    return {t.x0 + t.vx * s + 0.5 * t.ax * s * s, t.y0 + t.vy * s + 0.5 * t.ay * s * s};
}

void target_box(const TargetSpec& t, int frame, int h, int w, int& x1, int& y1, int& x2,
                int& y2) {
    const auto [cx, cy] = target_center(t, frame);
    const int side = std::max<long>(7, std::lround(6.0 * t.sigma));
    x1 = static_cast<int>(std::lround(cx - side / 2.0));
    y1 = static_cast<int>(std::lround(cy - side / 2.0));
    x2 = x1 + side;
    y2 = y1 + side;
    x1 = std::max(0, x1);
    y1 = std::max(0, y1);
    x2 = std::min(w, x2);
    y2 = std::min(h, y2);
}

Sequence generate_sequence(const SceneSpec& spec) {
    validate(spec);
    Sequence seq;
    seq.spec = spec;
    const int h = spec.h, w = spec.w;

    for (int t = 0; t < spec.frames; ++t) {
        // Stream 0 of (seed, sequence, frame) drives the background noise;
        // everything else about the frame is a deterministic function.
        SplitMix64 rng(substream(spec.seed, static_cast<std::uint64_t>(spec.seq_id),
                                 static_cast<std::uint64_t>(t), 0));
        std::vector<double> noise(static_cast<size_t>(h) * w);
        for (double& v : noise) v = rng.normal(0.0, 1.0);
        noise = blur3(blur3(noise, h, w), h, w);

        Tensor img({1, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double gx = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
                const double gy = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
                img.v[static_cast<size_t>(y) * w + x] = spec.base +
                                                        spec.grad_amp * 0.5 * (gx + gy) +
                                                        spec.noise_amp * noise[static_cast<size_t>(y) * w + x];
            }

        FrameAnns anns;
        for (size_t k = 0; k < spec.targets.size(); ++k) {
            const TargetSpec& tg = spec.targets[k];
            if (!target_active(tg, t, h, w)) continue;
            const double dim = dim_factor(spec, static_cast<int>(k), t);
            const double amp = tg.contrast * dim;
            const auto [cx, cy] = target_center(tg, t);

            const int r = static_cast<int>(std::ceil(5.0 * tg.sigma));
            const int yc = static_cast<int>(std::lround(cy)), xc = static_cast<int>(std::lround(cx));
            for (int y = std::max(0, yc - r); y <= std::min(h - 1, yc + r); ++y)
                for (int x = std::max(0, xc - r); x <= std::min(w - 1, xc + r); ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    img.v[static_cast<size_t>(y) * w + x] +=
                        amp * std::exp(-d2 / (2.0 * tg.sigma * tg.sigma));
                }

            TargetAnn ann;
            ann.target = static_cast<int>(k);
            target_box(tg, t, h, w, ann.x1, ann.y1, ann.x2, ann.y2);
            ann.visible = true;
            anns.push_back(ann);

            // Local SNR floor: on frames where the target is not dimmed, its
            // peak must clear the measured local noise level.
            if (spec.noise_amp > 0.0 && dim == 1.0) {
                double mean = 0.0;
                int n = 0;
                for (int y = ann.y1; y < ann.y2; ++y)
                    for (int x = ann.x1; x < ann.x2; ++x, ++n)
                        mean += spec.noise_amp * noise[static_cast<size_t>(y) * w + x];
                mean /= std::max(1, n);
                double var = 0.0;
                for (int y = ann.y1; y < ann.y2; ++y)
                    for (int x = ann.x1; x < ann.x2; ++x) {
                        const double d = spec.noise_amp * noise[static_cast<size_t>(y) * w + x] - mean;
                        var += d * d;
                    }
                const double sd = std::sqrt(var / std::max(1, n));
                if (sd > 0.0 && tg.contrast / sd < spec.snr_floor)
                    throw InputError("target " + std::to_string(k) + ", frame " +
                                     std::to_string(t) + ": local SNR " +
                                     fmt(tg.contrast / sd) + " below floor " +
                                     fmt(spec.snr_floor));
            }
        }

        for (double& v : img.v) v = png_io::quantize16(std::clamp(v, 0.0, 1.0));
        seq.frames.push_back(std::move(img));
        seq.anns.push_back(std::move(anns));
    }
    return seq;
}

std::vector<Box> gt_boxes(const FrameAnns& anns) {
    std::vector<Box> out;
    for (const TargetAnn& a : anns)
        if (a.visible)
            out.push_back({static_cast<double>(a.x1), static_cast<double>(a.y1),
                           static_cast<double>(a.x2), static_cast<double>(a.y2)});
    return out;
}

namespace {

std::string frame_name(int t) {
    char b[16];
    std::snprintf(b, sizeof b, "%06d.png", t);
    return b;
}

std::vector<std::string> tokens(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    std::string t;
    while (ss >> t) out.push_back(t);
    return out;
}

long to_int(const std::string& tok, const std::string& file, long ln) {
    try {
        size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw parse_error(file, ln, "expected integer, got '" + tok + "'");
    }
}

double to_real(const std::string& tok, const std::string& file, long ln) {
    try {
        size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw parse_error(file, ln, "expected number, got '" + tok + "'");
    }
}

std::uint64_t to_u64(const std::string& tok, const std::string& file, long ln) {
    try {
        size_t used = 0;
        const unsigned long long v = std::stoull(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw parse_error(file, ln, "expected unsigned integer, got '" + tok + "'");
    }
}

}  // namespace

void write_dataset(const std::string& root, const std::vector<Sequence>& seqs) {
    std::set<int> ids;
    for (const Sequence& s : seqs)
        if (!ids.insert(s.spec.seq_id).second)
            throw InputError("duplicate sequence id " + std::to_string(s.spec.seq_id));

    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw InputError("cannot create dataset root " + root + ": " + ec.message());

    std::ofstream man(fs::path(root) / "manifest.txt");
    if (!man) throw InputError("cannot write manifest under " + root);
    man << "bird-dataset 1\n";
    man << "sequences " << seqs.size() << "\n";

    for (const Sequence& s : seqs) {
        const SceneSpec& sp = s.spec;
        if (static_cast<int>(s.frames.size()) != sp.frames ||
            static_cast<int>(s.anns.size()) != sp.frames)
            throw InputError("sequence " + std::to_string(sp.seq_id) +
                             ": frame/annotation count does not match spec");
        man << "seq " << sp.seq_id << " frames " << sp.frames << " size " << sp.h << " "
            << sp.w << " seed " << sp.seed << " base " << fmt(sp.base) << " grad "
            << fmt(sp.grad_amp) << " noise " << fmt(sp.noise_amp) << " snr "
            << fmt(sp.snr_floor) << " targets " << sp.targets.size() << " dims "
            << sp.dim_events.size() << "\n";
        for (size_t k = 0; k < sp.targets.size(); ++k) {
            const TargetSpec& t = sp.targets[k];
            man << "tgt " << sp.seq_id << " " << k << " " << fmt(t.x0) << " " << fmt(t.y0)
                << " " << fmt(t.vx) << " " << fmt(t.vy) << " " << fmt(t.ax) << " "
                << fmt(t.ay) << " " << fmt(t.sigma) << " " << fmt(t.contrast) << "\n";
        }
        for (const DimEvent& d : sp.dim_events)
            man << "dim " << sp.seq_id << " " << d.target << " " << d.first << " " << d.last
                << " " << fmt(d.factor) << "\n";

        const fs::path dir = fs::path(root) / std::to_string(sp.seq_id);
        fs::create_directories(dir / "frames", ec);
        if (ec) throw InputError("cannot create " + (dir / "frames").string());

        long records = 0;
        for (const FrameAnns& fa : s.anns) records += static_cast<long>(fa.size());
        std::ofstream ann(dir / "ann.txt");
        if (!ann) throw InputError("cannot write " + (dir / "ann.txt").string());
        ann << "annotations " << records << "\n";
        for (int t = 0; t < sp.frames; ++t)
            for (const TargetAnn& a : s.anns[static_cast<size_t>(t)])
                ann << sp.seq_id << " " << t << " " << a.target << " " << a.x1 << " " << a.y1
                    << " " << a.x2 << " " << a.y2 << " " << (a.visible ? 1 : 0) << "\n";
        if (!ann) throw InputError("write failed: " + (dir / "ann.txt").string());

        for (int t = 0; t < sp.frames; ++t)
            png_io::write_gray16((dir / "frames" / frame_name(t)).string(),
                                 s.frames[static_cast<size_t>(t)]);
    }
    if (!man) throw InputError("write failed: manifest under " + root);
}

std::vector<Sequence> read_dataset(const std::string& root) {
    const std::string man_path = (fs::path(root) / "manifest.txt").string();
    std::ifstream man(man_path);
    if (!man) throw ParseError("cannot open: " + man_path);

    long ln = 0;
    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(man, line)) {
            ++ln;
            if (!tokens(line).empty()) return true;
        }
        return false;
    };

    if (!next_line() || line != "bird-dataset 1")
        throw parse_error(man_path, ln, "missing 'bird-dataset 1' header");
    if (!next_line()) throw parse_error(man_path, ln, "missing 'sequences' line");
    auto tk = tokens(line);
    if (tk.size() != 2 || tk[0] != "sequences")
        throw parse_error(man_path, ln, "expected 'sequences <n>'");
    const long nseq = to_int(tk[1], man_path, ln);
    if (nseq < 0) throw parse_error(man_path, ln, "negative sequence count");

    std::vector<Sequence> out;
    for (long si = 0; si < nseq; ++si) {
        if (!next_line()) throw parse_error(man_path, ln, "expected 'seq' line");
        tk = tokens(line);
        if (tk.size() != 21 || tk[0] != "seq" || tk[2] != "frames" || tk[4] != "size" ||
            tk[7] != "seed" || tk[9] != "base" || tk[11] != "grad" || tk[13] != "noise" ||
            tk[15] != "snr" || tk[17] != "targets" || tk[19] != "dims")
            throw parse_error(man_path, ln, "malformed 'seq' line");
        Sequence s;
        SceneSpec& sp = s.spec;
        sp.seq_id = static_cast<int>(to_int(tk[1], man_path, ln));
        sp.frames = static_cast<int>(to_int(tk[3], man_path, ln));
        sp.h = static_cast<int>(to_int(tk[5], man_path, ln));
        sp.w = static_cast<int>(to_int(tk[6], man_path, ln));
        sp.seed = to_u64(tk[8], man_path, ln);
        sp.base = to_real(tk[10], man_path, ln);
        sp.grad_amp = to_real(tk[12], man_path, ln);
        sp.noise_amp = to_real(tk[14], man_path, ln);
        sp.snr_floor = to_real(tk[16], man_path, ln);
        const long ntgt = to_int(tk[tk.size() - 3], man_path, ln);
        const long ndim = to_int(tk[tk.size() - 1], man_path, ln);

        for (long k = 0; k < ntgt; ++k) {
            if (!next_line()) throw parse_error(man_path, ln, "expected 'tgt' line");
            tk = tokens(line);
            if (tk.size() != 11 || tk[0] != "tgt")
                throw parse_error(man_path, ln, "malformed 'tgt' line");
            TargetSpec t;
            t.x0 = to_real(tk[3], man_path, ln);
            t.y0 = to_real(tk[4], man_path, ln);
            t.vx = to_real(tk[5], man_path, ln);
            t.vy = to_real(tk[6], man_path, ln);
            t.ax = to_real(tk[7], man_path, ln);
            t.ay = to_real(tk[8], man_path, ln);
            t.sigma = to_real(tk[9], man_path, ln);
            t.contrast = to_real(tk[10], man_path, ln);
            sp.targets.push_back(t);
        }
        for (long k = 0; k < ndim; ++k) {
            if (!next_line()) throw parse_error(man_path, ln, "expected 'dim' line");
            tk = tokens(line);
            if (tk.size() != 6 || tk[0] != "dim")
                throw parse_error(man_path, ln, "malformed 'dim' line");
            DimEvent d;
            d.target = static_cast<int>(to_int(tk[2], man_path, ln));
            d.first = static_cast<int>(to_int(tk[3], man_path, ln));
            d.last = static_cast<int>(to_int(tk[4], man_path, ln));
            d.factor = to_real(tk[5], man_path, ln);
            sp.dim_events.push_back(d);
        }

        const fs::path dir = fs::path(root) / std::to_string(sp.seq_id);
        const std::string ann_path = (dir / "ann.txt").string();
        std::ifstream ann(ann_path);
        if (!ann) throw ParseError("cannot open: " + ann_path);
        long aln = 0;
        std::string aline;
        if (!std::getline(ann, aline)) throw parse_error(ann_path, 1, "empty annotation file");
        ++aln;
        auto atk = tokens(aline);
        if (atk.size() != 2 || atk[0] != "annotations")
            throw parse_error(ann_path, aln, "expected 'annotations <n>' header");
        const long nrec = to_int(atk[1], ann_path, aln);

        s.anns.assign(static_cast<size_t>(sp.frames), {});
        for (long r = 0; r < nrec; ++r) {
            if (!std::getline(ann, aline))
                throw parse_error(ann_path, aln, "truncated: expected " + std::to_string(nrec) +
                                                     " records, got " + std::to_string(r));
            ++aln;
            atk = tokens(aline);
            if (atk.size() != 8)
                throw parse_error(ann_path, aln,
                                  "expected 8 fields, got " + std::to_string(atk.size()));
            if (to_int(atk[0], ann_path, aln) != sp.seq_id)
                throw parse_error(ann_path, aln, "sequence id mismatch");
            const long frame = to_int(atk[1], ann_path, aln);
            if (frame < 0 || frame >= sp.frames)
                throw parse_error(ann_path, aln, "frame index " + std::to_string(frame) +
                                                     " outside sequence");
            TargetAnn a;
            a.target = static_cast<int>(to_int(atk[2], ann_path, aln));
            a.x1 = static_cast<int>(to_int(atk[3], ann_path, aln));
            a.y1 = static_cast<int>(to_int(atk[4], ann_path, aln));
            a.x2 = static_cast<int>(to_int(atk[5], ann_path, aln));
            a.y2 = static_cast<int>(to_int(atk[6], ann_path, aln));
            const long vis = to_int(atk[7], ann_path, aln);
            if (vis != 0 && vis != 1) throw parse_error(ann_path, aln, "visible must be 0 or 1");
            a.visible = vis == 1;
            s.anns[static_cast<size_t>(frame)].push_back(a);
        }

        for (int t = 0; t < sp.frames; ++t) {
            const std::string fpath = (dir / "frames" / frame_name(t)).string();
            Tensor img = png_io::read_gray16(fpath);
            if (img.dim(1) != sp.h || img.dim(2) != sp.w)
                throw ParseError(fpath + ": size " + std::to_string(img.dim(2)) + "x" +
                                 std::to_string(img.dim(1)) + " does not match manifest " +
                                 std::to_string(sp.w) + "x" + std::to_string(sp.h));
            s.frames.push_back(std::move(img));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace bird::synth
