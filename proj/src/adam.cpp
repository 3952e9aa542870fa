#include "bird/adam.hpp"

#include <cmath>

namespace bird {

Adam::Adam(ParamStore& ps, AdamConfig cfg) : ps_(ps), cfg_(cfg) {
    for (const auto& p : ps_.all()) {
        m_.push_back(Tensor::zeros(p->value.shape));
        v_.push_back(Tensor::zeros(p->value.shape));
    }
}

void Adam::step(double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto& params = ps_.all();
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& val = params[i]->value;
        const Tensor& grad = params[i]->grad;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int j = 0; j < val.numel(); ++j) {
            const double g = grad.v[static_cast<size_t>(j)] * grad_scale;
            m.v[static_cast<size_t>(j)] =
                cfg_.beta1 * m.v[static_cast<size_t>(j)] + (1.0 - cfg_.beta1) * g;
            v.v[static_cast<size_t>(j)] =
                cfg_.beta2 * v.v[static_cast<size_t>(j)] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m.v[static_cast<size_t>(j)] / bc1;
            const double vhat = v.v[static_cast<size_t>(j)] / bc2;
            val.v[static_cast<size_t>(j)] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace bird
