#pragma once

#include <cstdint>
#include <vector>

#include "sf/tape.hpp"

namespace sf {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed set of leaf parameters. step() consumes and
// zeroes the accumulated grads.
class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<NodePtr>& params);

    void step();
    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    std::uint64_t steps() const { return step_; }

private:
    AdamConfig cfg_;
    std::vector<NodePtr> params_;
    std::vector<Array> m_, v_;
    std::uint64_t step_ = 0;
};

}  // namespace sf
