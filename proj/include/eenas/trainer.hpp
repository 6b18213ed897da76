#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "eenas/dataset.hpp"
#include "eenas/eenn_model.hpp"
#include "eenas/losses.hpp"
#include "eenas/optimizer.hpp"

namespace eenas {

struct TrainConfig {
    int mu1 = 10, mu2 = 5, mu3 = 5;           // epochs per training phase
    double w1 = 1.0, w2 = 1.0, w3 = 1.0;      // loss weights
    double lambda_e = 1.0;                    // joint-mode branch weight
    bool joint_mode = false;                  // baseline joint training instead of the staged schedule
    double fbar_a = 0.65;                     // accuracy constraint, top-1 fraction
    double fbar_m_m = 2.7;                    // MAC constraint in millions
    bool constrained = true;
    int support_per_class = 10;
    int batch = 64;
    double lr = 1e-3;
    OptimAlgo optimizer = OptimAlgo::AdaptiveMoment;
    bool exit_regularizer = true;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochStat {
    int epoch = 0;
    int phase = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc_final = 0.0;
};

struct TrainResult {
    EennModel model;
    std::vector<EpochStat> trace;
    int best_epoch = -1;  // -1 when no epochs ran
};

/// Staged schedule: phase 1 trains backbone + final head with plain CE for
/// mu1 epochs; phase 2 trains the whole network with w1*L_acc + w2*L_cost
/// for mu2 epochs; phase 3 adds w3*L_peak with the support matrix refreshed
/// every epoch. Returns the weights of the epoch with the best validation
/// composite loss.
TrainResult train_eenn(const EennSpec& spec, const Dataset& dataset, const TrainConfig& cfg);

/// Per-sample, per-exit confidences and correctness, cached from one forward
/// pass over an evaluation set.
struct EvalCache {
    int n = 0;
    int exits = 0;
    std::vector<double> conf;        // n x exits; final column all 1
    std::vector<uint8_t> correct;    // n x exits
    std::vector<double> final_prob;  // max softmax of the final exit, per sample

    double conf_at(int s, int e) const { return conf[static_cast<std::size_t>(s) * exits + e]; }
    bool correct_at(int s, int e) const {
        return correct[static_cast<std::size_t>(s) * exits + e] != 0;
    }
};

EvalCache cache_eval(const EennModel& model, const Dataset& ds, int eval_batch = 256);

/// A sample halts at the first exit i whose cumulative confidence
/// c_i * prod_{k<i}(1-c_k) meets eps_i; the final exit always accepts.
struct InferenceOutcome {
    std::vector<int> exit_index;  // 0-based halting exit per sample
    std::vector<uint8_t> correct;
};

InferenceOutcome early_exit_inference(const EvalCache& cache,
                                      const std::vector<double>& thresholds);
InferenceOutcome early_exit_inference(const EennModel& model, const Dataset& ds,
                                      const std::vector<double>& thresholds);

/// F_M = sum_i gamma_i * U_i; utilizations must sum to 1 within 1e-9.
double adaptive_macs(const std::vector<double>& gamma, const std::vector<double>& util);

/// Equal-width binning; returns a percentage.
double compute_ece(const std::vector<double>& confidences, const std::vector<uint8_t>& correct,
                   int bins = 10);

struct EvaluationResult {
    double fa = 0.0;           // early-exit top-1, fraction
    double fa_backbone = 0.0;  // final-exit-only top-1, fraction
    double fm_m = 0.0;         // adaptive MACs, millions
    std::vector<double> util;
    std::vector<double> thresholds;
    std::vector<double> ece;      // percent, per exit
    std::vector<double> gamma_m;  // millions
};

/// Grid search over {0.0,...,0.9}^{B-1} maximizing accuracy (ties: lower
/// F_M, then lexicographically smallest), then threshold reduction from the
/// second-last exit down while F_M exceeds the constraint and accuracy stays
/// admissible. Unconstrained runs skip the reduction step.
EvaluationResult tune_thresholds(const EvalCache& cache, const std::vector<double>& gamma_m,
                                 double fbar_a, double fbar_m_m, bool constrained);

/// Evaluate a fixed threshold vector against a cache.
EvaluationResult evaluate_thresholds(const EvalCache& cache, const std::vector<double>& gamma_m,
                                     const std::vector<double>& thresholds);

}  // namespace eenas
