#include "docbin/optim.hpp"

#include <cmath>
#include <string>

namespace docbin {

void adam_step(std::vector<Tensor>& params, AdamState& state) {
    if (state.m.empty() && state.v.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.data().size(), Scalar(0));
            state.v.emplace_back(p.data().size(), Scalar(0));
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: optimizer holds " + std::to_string(state.m.size()) + " moment buffers for " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw GradError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        if (state.m[i].size() != params[i].data().size() || state.v[i].size() != params[i].data().size()) {
            throw ShapeError("adam_step: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                             shape_str(params[i].shape()));
        }
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].mutable_data();
        auto g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g[j];
            m[j] = Scalar(state.beta1 * m[j] + (1.0 - state.beta1) * gj);
            v[j] = Scalar(state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] = Scalar(w[j] - state.lr * mhat / (std::sqrt(vhat) + state.epsilon));
        }
    }
}

void zero_grads(std::vector<Tensor>& params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace docbin
