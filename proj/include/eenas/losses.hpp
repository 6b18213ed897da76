#pragma once

#include <vector>

#include "eenas/dataset.hpp"
#include "eenas/eenn_model.hpp"
#include "eenas/tape.hpp"

namespace eenas {

/// Per-class, per-exit mean accuracies on the support set. Row j is computed
/// only from support samples of class j; entries lie in [0,1].
struct SupportMatrix {
    int classes = 0;
    int exits = 0;
    std::vector<double> acc;  // classes x exits, row-major

    double at(int cls, int exit_idx) const {
        return acc[static_cast<std::size_t>(cls) * exits + exit_idx];
    }
};

/// CE(f_B, y) + CE(f_bar_{B-1}, y) + sum_{i<B} R_i where R_i is the BCE
/// between c_i and the detached per-sample correctness of exit i's own
/// prediction. For B=1 only the first term remains. The regularizer sum is
/// optional (on by default).
Tensor loss_acc(Tape& tape, const EennModel::Outputs& out, const std::vector<int>& labels,
                bool exit_regularizer = true);

/// l(f_B,y) + lambda_e * sum_{i<B} l(f_i,y).
Tensor loss_joint(Tape& tape, const EennModel::Outputs& out, const std::vector<int>& labels,
                  double lambda_e);

/// Recursive differentiable expected cost: gtilde_i = c_i*gamma_i +
/// (1-c_i)*gtilde_{i+1}, base gtilde_B = gamma_B; returns the batch mean of
/// gtilde_1. gamma is per-exit, any consistent unit.
Tensor expected_cost(Tape& tape, const std::vector<Tensor>& conf,
                     const std::vector<double>& gamma);
double expected_cost(const std::vector<double>& conf, const std::vector<double>& gamma);

/// max(0, gtilde - fbar_m) / (gamma_B - fbar_m), in [0,1]. A vacuous
/// constraint (fbar_m >= gamma_B) yields a constant 0 with a logged warning.
Tensor loss_cost(Tape& tape, const Tensor& gtilde_mean, double fbar_m, double gamma_final);

/// Mean squared error between each sample's non-final confidences and the
/// support-matrix row of its class (targets detached).
Tensor loss_peak(Tape& tape, const std::vector<Tensor>& conf, const SupportMatrix& sm,
                 const std::vector<int>& labels);

/// SM[j][i] = fraction of class-j support samples exit i classifies
/// correctly. Runs outside any gradient tape; requires every class present
/// with equal counts.
SupportMatrix compute_support_matrix(const EennModel& model, const Dataset& support,
                                     int eval_batch = 256);

}  // namespace eenas
