#pragma once

#include <map>
#include <string>

#include "planeq/params.hpp"

namespace planeq::train {

// Decoupled-weight-decay adaptive-moment optimizer.
struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update to every parameter present in `grads`; parameters
    // without a gradient entry are left untouched. Aborts on non-finite
    // gradients.
    void step(ParamStore& params, const std::map<std::string, Tensor>& grads);

    int64_t steps_taken() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace planeq::train
