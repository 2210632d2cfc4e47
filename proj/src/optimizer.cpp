#include "fgsr/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace fgsr {

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (params_.empty()) throw std::invalid_argument("Adam: empty parameter list");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.var->value.shape()));
        v_.push_back(Tensor::zeros(p.var->value.shape()));
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
}

void Adam::step(double lr) {
    ++t_;
    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params_) {
            p.var->ensure_grad();
            for (std::int64_t i = 0; i < p.var->grad.numel(); ++i)
                sq += p.var->grad[i] * p.var->grad[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Node& n = *params_[k].var;
        n.ensure_grad();
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::int64_t i = 0; i < n.value.numel(); ++i) {
            const double g = n.grad[i] * clip_scale;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            n.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace fgsr
