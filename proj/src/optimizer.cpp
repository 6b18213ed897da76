#include "eenas/optimizer.hpp"

#include <cmath>

namespace eenas {

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    state_.algo = cfg_.algo;
    state_.lr = cfg_.lr;
    if (cfg_.algo == OptimAlgo::AdaptiveMoment) {
        state_.m.resize(params_.size());
        state_.v.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            state_.m[i].assign(params_[i].numel(), 0.0);
            state_.v[i].assign(params_[i].numel(), 0.0);
        }
    }
}

void Optimizer::step() {
    for (const Tensor& p : params_)
        if (!p.has_grad())
            throw ContractError("optimizer step: parameter " + p.shape_str() +
                                " has no gradient");
    ++state_.step_count;
    if (cfg_.algo == OptimAlgo::Sgd) {
        for (Tensor& p : params_) {
            auto& d = p.data();
            const auto& g = p.grad_view();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= cfg_.lr * g[i];
        }
    } else {
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.step_count));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.step_count));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& d = params_[k].data();
            const auto& g = params_[k].grad_view();
            auto& m = state_.m[k];
            auto& v = state_.v[k];
            for (std::size_t i = 0; i < d.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                d[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }
    zero_grad();
}

void Optimizer::zero_grad() {
    for (Tensor& p : params_) p.clear_grad();
}

}  // namespace eenas
