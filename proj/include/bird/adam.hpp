#pragma once

#include <vector>

#include "bird/graph.hpp"
#include "bird/tensor.hpp"

namespace bird {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First-order adaptive optimizer over a ParamStore, with bias correction.
// Consumes Param::grad (optionally rescaled, e.g. by 1/batch) and leaves
// zeroing the gradients to the caller.
class Adam {
public:
    explicit Adam(ParamStore& ps, AdamConfig cfg = {});

    void step(double grad_scale = 1.0);

    long steps_taken() const { return t_; }

private:
    ParamStore& ps_;
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace bird
