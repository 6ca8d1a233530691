#include "planeq/optimizer.hpp"

#include <cmath>

namespace planeq::train {

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

    for (const auto& [name, g] : grads) {
        if (!g.all_finite())
            throw NumericError("non-finite gradient for parameter '" + name + "' at step " +
                               std::to_string(step_));
        Tensor& p = params.at(name);
        if (!p.same_dims(g)) throw ShapeError("gradient dims mismatch for '" + name + "'");

        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Tensor(p.dims())).first;
            v_.emplace(name, Tensor(p.dims()));
        }
        Tensor& m = mit->second;
        Tensor& v = v_.at(name);

        for (int i = 0; i < p.numel(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            // decoupled decay: shrink the weight independently of the moments
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    }
}

}  // namespace planeq::train
