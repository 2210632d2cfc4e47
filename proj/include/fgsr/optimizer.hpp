#pragma once

#include "fgsr/nets.hpp"

namespace fgsr {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables clipping
};

// Adam over a fixed, ordered parameter list. Moment buffers belong to the
// optimizer, so a parameter appearing in two optimizers has independent
// moments in each.
class Adam {
public:
    Adam(ParamList params, AdamConfig cfg = {});

    void zero_grad();
    void step(double lr);

    const ParamList& params() const { return params_; }
    std::int64_t steps_taken() const { return t_; }

    // checkpoint access
    std::vector<Tensor>& moment1() { return m_; }
    std::vector<Tensor>& moment2() { return v_; }
    void set_steps_taken(std::int64_t t) { t_ = t; }

private:
    ParamList params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace fgsr
