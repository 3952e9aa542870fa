#include "bird/model.hpp"

#include <fstream>

#include "bird/backbone.hpp"
#include "bird/blocks.hpp"
#include "bird/detection.hpp"
#include "bird/error.hpp"
#include "bird/fusion.hpp"
#include "bird/ops.hpp"
#include "bird/rng.hpp"

namespace bird {

ClipBatch pad_clip(const std::vector<Tensor>& frames, int n) {
    if (frames.empty()) throw InputError("pad_clip: empty clip");
    if (static_cast<int>(frames.size()) > n)
        throw InputError("pad_clip: got " + std::to_string(frames.size()) +
                         " frames for clip length " + std::to_string(n));
    ClipBatch clip;
    clip.original_length = static_cast<int>(frames.size());
    clip.frames = frames;
    while (static_cast<int>(clip.frames.size()) < n) clip.frames.push_back(frames.back());
    return clip;
}

BirdModel::BirdModel(uint64_t seed, ModelConfig c) : cfg(c) {
    SplitMix64 rng(seed);
    backbone::define(ps_, rng);
    fusion::def_ltmf(ps_, rng, "bwd.ltmf");
    blocks::def_conv(ps_, rng, "bwd.lt_fallback", 64, 192, 3);
    fusion::def_gtmf(ps_, rng, "bwd.gtmf");
    fusion::def_ltmf(ps_, rng, "fwd.ltmf");
    blocks::def_conv(ps_, rng, "fwd.lt_fallback", 64, 192, 3);
    fusion::def_gtmf(ps_, rng, "fwd.gtmf");
    blocks::def_conv(ps_, rng, "fuse", 64, 192, 3);
    detection::define_head(ps_, rng, cfg.num_classes);
}

NodeId BirdModel::extract(Graph& g, NodeId frame) {
    ++counters_.backbone;
    return backbone::extract(g, ps_, frame);
}

ClipFeatures BirdModel::forward_clip(Graph& g, const ClipBatch& clip) {
    const int n = static_cast<int>(clip.frames.size());
    if (n == 0) throw InputError("forward_clip: empty clip");

    ClipFeatures cf;
    for (const Tensor& f : clip.frames) {
        cf.frames.push_back(g.constant(f));
        cf.extracted.push_back(extract(g, cf.frames.back()));
    }
    const NodeId zero = g.constant(Tensor::zeros(g.val(cf.extracted[0]).shape));
    cf.local_backward.assign(static_cast<size_t>(n), zero);
    cf.backward.assign(static_cast<size_t>(n), zero);
    cf.local_forward.assign(static_cast<size_t>(n), zero);
    cf.forward.assign(static_cast<size_t>(n), zero);
    cf.backward_deform.assign(static_cast<size_t>(n), {-1, -1});
    cf.forward_deform.assign(static_cast<size_t>(n), {-1, -1});

    // Out-of-range neighbors are copies of the boundary frame's feature.
    auto local_fuse = [&](const std::string& branch, const std::vector<NodeId>& src, int i,
                          std::vector<std::pair<NodeId, NodeId>>& diag) {
        const NodeId prev = src[static_cast<size_t>(std::max(0, i - 1))];
        const NodeId next = src[static_cast<size_t>(std::min(n - 1, i + 1))];
        if (cfg.enable_ltmf) {
            ++counters_.ltmf;
            const fusion::LtmfOut out =
                fusion::ltmf(g, ps_, branch + ".ltmf", prev, src[static_cast<size_t>(i)], next);
            diag[static_cast<size_t>(i)] = {out.offsets, out.masks};
            return out.fused;
        }
        return blocks::conv(
            g, ps_, branch + ".lt_fallback",
            ops::concat_channels(g, {prev, src[static_cast<size_t>(i)], next}));
    };

    if (cfg.enable_bp) {
        NodeId state = zero;  // F^B_N initialized to zero at the clip boundary
        for (int i = n - 1; i >= 0; --i) {
            const NodeId fb = local_fuse("bwd", cf.extracted, i, cf.backward_deform);
            cf.local_backward[static_cast<size_t>(i)] = fb;
            if (cfg.enable_gtmf) {
                ++counters_.gtmf;
                state = fusion::gtmf(g, ps_, "bwd.gtmf", fb, state);
            } else {
                state = fb;
            }
            cf.backward[static_cast<size_t>(i)] = state;
        }
    }

    if (cfg.enable_fp) {
        // The forward branch consumes the backward-branch outputs; with that
        // branch disabled it falls back to the extracted features.
        const std::vector<NodeId>& src = cfg.enable_bp ? cf.backward : cf.extracted;
        NodeId state = zero;  // F^F_{-1}
        for (int i = 0; i < n; ++i) {
            const NodeId ff = local_fuse("fwd", src, i, cf.forward_deform);
            cf.local_forward[static_cast<size_t>(i)] = ff;
            if (cfg.enable_gtmf) {
                ++counters_.gtmf;
                state = fusion::gtmf(g, ps_, "fwd.gtmf", ff, state);
            } else {
                state = ff;
            }
            cf.forward[static_cast<size_t>(i)] = state;
        }
    }

    for (int i = 0; i < n; ++i)
        cf.fused.push_back(
            blocks::conv(g, ps_, "fuse",
                         ops::concat_channels(g, {cf.extracted[static_cast<size_t>(i)],
                                                  cf.backward[static_cast<size_t>(i)],
                                                  cf.forward[static_cast<size_t>(i)]})));
    return cf;
}

namespace {
constexpr char kMagic[9] = "BIRDCKP1";
}

void BirdModel::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    auto w32 = [&f](int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    w32(cfg.n_train);
    w32(cfg.num_classes);
    w32(fusion::kChannels);
    w32(fusion::kDeformGroups);
    w32(fusion::kKernel);
    const uint64_t count = ps_.all().size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& p : ps_.all()) {
        const uint32_t nl = static_cast<uint32_t>(p->name.size());
        f.write(reinterpret_cast<const char*>(&nl), 4);
        f.write(p->name.data(), nl);
        const uint32_t rank = static_cast<uint32_t>(p->value.shape.size());
        f.write(reinterpret_cast<const char*>(&rank), 4);
        for (int d : p->value.shape) w32(d);
        f.write(reinterpret_cast<const char*>(p->value.v.data()),
                static_cast<std::streamsize>(p->value.v.size() * sizeof(double)));
    }
    if (!f) throw InputError("error writing checkpoint: " + path);
}

BirdModel BirdModel::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint: " + path);
    auto fail = [&path](const std::string& what) { return ParseError(path + ": " + what); };
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != std::string(kMagic, 8))
        throw fail("not a checkpoint file (bad magic)");
    auto r32 = [&]() {
        int32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        if (!f) throw ParseError(path + ": truncated header");
        return v;
    };
    ModelConfig cfg;
    cfg.n_train = r32();
    cfg.num_classes = r32();
    if (r32() != fusion::kChannels || r32() != fusion::kDeformGroups ||
        r32() != fusion::kKernel)
        throw fail("incompatible architecture constants");

    BirdModel m(0, cfg);
    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 8);
    if (!f || count != m.ps_.all().size())
        throw fail("parameter count mismatch: file has " + std::to_string(count) +
                   ", model has " + std::to_string(m.ps_.all().size()));
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t nl = 0;
        f.read(reinterpret_cast<char*>(&nl), 4);
        if (!f || nl > 4096) throw fail("corrupt parameter record " + std::to_string(i));
        std::string name(nl, '\0');
        f.read(name.data(), nl);
        Param* p = m.ps_.find(name);
        if (!f || !p) throw fail("unknown parameter: " + name);
        uint32_t rank = 0;
        f.read(reinterpret_cast<char*>(&rank), 4);
        if (!f || rank > 8) throw fail("corrupt shape for " + name);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = r32();
        if (shape != p->value.shape) throw fail("shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(p->value.v.data()),
               static_cast<std::streamsize>(p->value.v.size() * sizeof(double)));
        if (!f) throw fail("truncated values for " + name);
    }
    return m;
}

}  // namespace bird
