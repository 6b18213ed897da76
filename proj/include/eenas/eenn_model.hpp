#pragma once

#include <map>
#include <string>
#include <vector>

#include "eenas/checkpoint.hpp"
#include "eenas/netspec.hpp"
#include "eenas/ops.hpp"
#include "eenas/rng.hpp"
#include "eenas/tape.hpp"

namespace eenas {

/// Weight container plus forward pass for an EennSpec. Weights are
/// He-style fan-in-scaled uniform from the given seed; biases start at 0.
class EennModel {
public:
    EennModel(EennSpec spec, std::uint64_t seed);

    struct Outputs {
        std::vector<Tensor> logits;       // per exit, [N, classes]; last = final exit
        std::vector<Tensor> confidences;  // per exit, [N,1]; last is constant 1
    };

    /// One pass computing every exit's logits and confidences; the final
    /// exit's confidence is forced to 1.
    Outputs forward(Tape& tape, const Tensor& batch) const;

    const EennSpec& spec() const { return spec_; }

    /// Parameters in deterministic registration order.
    std::vector<Tensor> parameters(bool backbone_and_final_only = false) const;
    NamedParams named_parameters() const;

    void save(const std::string& path) const;
    void load(const std::string& path);

    /// Deep copy of all weight values (for checkpoint-best bookkeeping).
    std::vector<std::vector<double>> snapshot_weights() const;
    void restore_weights(const std::vector<std::vector<double>>& snap);

private:
    struct ParamEntry {
        std::string name;
        Tensor tensor;
        bool backbone = false;  // stem/blocks/final head vs exit heads
    };

    Tensor run_layers(Tape& tape, Tensor x, const std::vector<LayerSpec>& layers,
                      const std::string& group) const;
    void register_layer_params(const std::string& group, const std::vector<LayerSpec>& layers,
                               bool backbone, Rng& rng);

    EennSpec spec_;
    std::vector<ParamEntry> params_;
    std::map<std::string, Tensor> by_name_;
};

/// c^r_i = c_i * prod_{k<i}(1 - c_k); with c_B = 1 the entries sum to 1.
std::vector<Tensor> cumulative_confidences(Tape& tape, const std::vector<Tensor>& conf);
std::vector<double> cumulative_confidences(const std::vector<double>& conf);

/// f_bar_k = sum_{i<=k} c^r_i * f_i (differentiable through both factors).
Tensor aggregate_outputs(Tape& tape, const std::vector<Tensor>& logits,
                         const std::vector<Tensor>& cumulative, int k);

}  // namespace eenas
