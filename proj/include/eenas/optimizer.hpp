#pragma once

#include <cstdint>
#include <vector>

#include "eenas/tensor.hpp"

namespace eenas {

enum class OptimAlgo { Sgd, AdaptiveMoment };

struct OptimizerConfig {
    OptimAlgo algo = OptimAlgo::AdaptiveMoment;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    OptimAlgo algo;
    double lr;
    std::int64_t step_count = 0;
    std::vector<std::vector<double>> m;  // first moments, one buffer per parameter
    std::vector<std::vector<double>> v;  // second moments
};

/// Updates parameters in place from their accumulated gradients and then
/// clears the gradients. Sgd: p -= lr*g. AdaptiveMoment: bias-corrected
/// first/second moment update.
class Optimizer {
public:
    Optimizer(std::vector<Tensor> params, OptimizerConfig cfg);

    void step();
    void zero_grad();

    const OptimizerState& state() const { return state_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    OptimizerConfig cfg_;
    OptimizerState state_;
};

}  // namespace eenas
