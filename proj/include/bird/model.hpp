#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bird/graph.hpp"
#include "bird/tensor.hpp"

namespace bird {

// Structural switches for the ablation variants. Every parameter is created
// regardless of the flags, so a given seed yields the same initialization for
// all variants; the flags only change which subgraphs the forward pass wires.
struct ModelConfig {
    int n_train = 5;          // clip length used in training (recorded in checkpoints)
    int num_classes = 1;
    bool enable_bp = true;    // backward propagation branch
    bool enable_fp = true;    // forward propagation branch
    bool enable_ltmf = true;  // local fusion (false: plain concat + 3x3 conv)
    bool enable_gtmf = true;  // global fusion (false: local feature passes through)
};

struct ClipBatch {
    std::vector<Tensor> frames;  // each (1, H, W), length N after padding
    int original_length = 0;
};

// Pads a clip to length n by repeating the last frame.
ClipBatch pad_clip(const std::vector<Tensor>& frames, int n);

// Node handles for everything the losses and diagnostics need. All feature
// lists have the padded clip length; disabled branches hold zero maps.
struct ClipFeatures {
    std::vector<NodeId> frames;          // input constants (for gradient probes)
    std::vector<NodeId> extracted;       // F^E
    std::vector<NodeId> local_backward;  // F^b
    std::vector<NodeId> backward;        // F^B
    std::vector<NodeId> local_forward;   // F^f
    std::vector<NodeId> forward;         // F^F
    std::vector<NodeId> fused;           // F^D
    // (offsets, masks) per frame for each branch; (-1,-1) when not emitted.
    std::vector<std::pair<NodeId, NodeId>> backward_deform;
    std::vector<std::pair<NodeId, NodeId>> forward_deform;
};

class BirdModel {
public:
    ModelConfig cfg;

    explicit BirdModel(uint64_t seed, ModelConfig cfg = {});

    ParamStore& params() { return ps_; }

    // Per-frame feature extraction (counts one backbone invocation).
    NodeId extract(Graph& g, NodeId frame);

    // Full pass: backbone per frame, backward branch (i = N-1..0), forward
    // branch (i = 0..N-1), then per-frame final fusion over
    // [extracted, backward, forward].
    ClipFeatures forward_clip(Graph& g, const ClipBatch& clip);

    struct Counters {
        long backbone = 0;
        long ltmf = 0;
        long gtmf = 0;
    };
    const Counters& counters() const { return counters_; }
    void reset_counters() { counters_ = {}; }

    // Versioned binary checkpoint; round-trips bit-exactly.
    void save(const std::string& path) const;
    static BirdModel load(const std::string& path);

private:
    ParamStore ps_;
    Counters counters_;
};

}  // namespace bird
