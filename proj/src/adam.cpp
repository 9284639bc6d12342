#include "sf/adam.hpp"

#include <cmath>

#include "sf/errors.hpp"

namespace sf {

Adam::Adam(AdamConfig cfg, const std::vector<NodePtr>& params) : cfg_(cfg), params_(params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step() {
    if (step_ >= (1ULL << 53)) fail("diffcore", "adam_step: step counter overflow");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Node& p = *params_[k];
        if (!p.grad_allocated()) p.ensure_grad();
        const std::size_t n = p.value.size();
        const double* g = p.grad.data();
        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(g[i]))
                fail("diffcore", "adam_step: non-finite gradient in parameter " +
                                     std::to_string(k) + " at index " + std::to_string(i));
        double* pm = m_[k].data();
        double* pv = v_[k].data();
        double* px = p.value.data();
        for (std::size_t i = 0; i < n; ++i) {
            pm[i] = cfg_.beta1 * pm[i] + (1.0 - cfg_.beta1) * g[i];
            pv[i] = cfg_.beta2 * pv[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = pm[i] / bc1;
            const double vhat = pv[i] / bc2;
            px[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.grad.fill(0.0);
    }
}

}  // namespace sf
