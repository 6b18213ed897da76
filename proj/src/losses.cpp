#include "eenas/losses.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>

#include "eenas/errors.hpp"

namespace eenas {

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
    const int n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    const double* d = logits.data().data();
    for (int i = 0; i < n; ++i) {
        const double* row = d + static_cast<std::size_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

}  // namespace

Tensor loss_acc(Tape& tape, const EennModel::Outputs& out, const std::vector<int>& labels,
                bool exit_regularizer) {
    const int B = static_cast<int>(out.logits.size());
    Tensor total = ops::cross_entropy(tape, out.logits.back(), labels);
    if (B == 1) return total;

    std::vector<Tensor> cr = cumulative_confidences(tape, out.confidences);
    Tensor fbar = aggregate_outputs(tape, out.logits, cr, B - 1);
    total = ops::add(tape, total, ops::cross_entropy(tape, fbar, labels));

    if (exit_regularizer) {
        // Correctness targets are computed from the pre-step forward values
        // and stay outside the gradient path.
        for (int i = 0; i < B - 1; ++i) {
            const std::vector<int> pred = argmax_rows(out.logits[static_cast<std::size_t>(i)]);
            Tensor target = Tensor::zeros({static_cast<int>(pred.size()), 1});
            for (std::size_t n = 0; n < pred.size(); ++n)
                target.data()[n] = pred[n] == labels[n] ? 1.0 : 0.0;
            Tensor ri = ops::bce(tape, out.confidences[static_cast<std::size_t>(i)], target);
            total = ops::add(tape, total, ri);
        }
    }
    return total;
}

Tensor loss_joint(Tape& tape, const EennModel::Outputs& out, const std::vector<int>& labels,
                  double lambda_e) {
    Tensor total = ops::cross_entropy(tape, out.logits.back(), labels);
    const int B = static_cast<int>(out.logits.size());
    for (int i = 0; i < B - 1; ++i) {
        Tensor li = ops::cross_entropy(tape, out.logits[static_cast<std::size_t>(i)], labels);
        total = ops::add(tape, total, ops::mul(tape, li, Tensor::scalar(lambda_e)));
    }
    return total;
}

Tensor expected_cost(Tape& tape, const std::vector<Tensor>& conf,
                     const std::vector<double>& gamma) {
    const std::size_t B = conf.size();
    if (gamma.size() != B) throw ContractError("expected_cost: gamma/confidence length mismatch");
    const int n = conf[0].dim(0);
    Tensor gtilde = Tensor::full({n, 1}, gamma.back());
    for (std::size_t i = B - 1; i-- > 0;) {
        Tensor hit = ops::mul(tape, conf[i], Tensor::scalar(gamma[i]));
        Tensor neg = ops::mul(tape, conf[i], Tensor::scalar(-1.0));
        Tensor one_minus = ops::add(tape, neg, Tensor::scalar(1.0));
        Tensor carry = ops::mul(tape, one_minus, gtilde);
        gtilde = ops::add(tape, hit, carry);
    }
    return ops::mean(tape, gtilde);
}

double expected_cost(const std::vector<double>& conf, const std::vector<double>& gamma) {
    if (conf.size() != gamma.size())
        throw ContractError("expected_cost: gamma/confidence length mismatch");
    double gtilde = gamma.back();
    for (std::size_t i = conf.size() - 1; i-- > 0;)
        gtilde = conf[i] * gamma[i] + (1.0 - conf[i]) * gtilde;
    return gtilde;
}

Tensor loss_cost(Tape& tape, const Tensor& gtilde_mean, double fbar_m, double gamma_final) {
    if (fbar_m >= gamma_final) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true))
            std::cerr << "[warn] cost constraint " << fbar_m << " >= max cost " << gamma_final
                      << "; constraint is vacuous and the cost loss is 0\n";
        return Tensor::scalar(0.0);
    }
    Tensor shifted = ops::add(tape, gtilde_mean, Tensor::scalar(-fbar_m));
    Tensor clipped = ops::relu(tape, shifted);  // max(0, .)
    return ops::mul(tape, clipped, Tensor::scalar(1.0 / (gamma_final - fbar_m)));
}

Tensor loss_peak(Tape& tape, const std::vector<Tensor>& conf, const SupportMatrix& sm,
                 const std::vector<int>& labels) {
    const int B = static_cast<int>(conf.size());
    if (B < 2) throw ContractError("loss_peak: needs at least one non-final exit");
    if (sm.exits < B - 1) throw ContractError("loss_peak: support matrix too narrow");
    const int n = conf[0].dim(0);
    // Final exit excluded: its confidence is fixed at 1.
    Tensor acc;
    for (int i = 0; i < B - 1; ++i) {
        Tensor target = Tensor::zeros({n, 1});
        for (int s = 0; s < n; ++s)
            target.data()[static_cast<std::size_t>(s)] =
                sm.at(labels[static_cast<std::size_t>(s)], i);
        Tensor term = ops::mse(tape, conf[static_cast<std::size_t>(i)], target);
        acc = i == 0 ? term : ops::add(tape, acc, term);
    }
    if (B - 1 > 1) acc = ops::mul(tape, acc, Tensor::scalar(1.0 / (B - 1)));
    return acc;
}

SupportMatrix compute_support_matrix(const EennModel& model, const Dataset& support,
                                     int eval_batch) {
    support.validate();
    std::vector<int> per_class(static_cast<std::size_t>(support.classes), 0);
    for (int l : support.labels) ++per_class[static_cast<std::size_t>(l)];
    for (int j = 0; j < support.classes; ++j)
        if (per_class[static_cast<std::size_t>(j)] == 0)
            throw ContractError("support set is missing class " + std::to_string(j));

    const int B = model.spec().num_exits();
    SupportMatrix sm;
    sm.classes = support.classes;
    sm.exits = B;
    sm.acc.assign(static_cast<std::size_t>(sm.classes) * B, 0.0);

    Tape tape;
    tape.set_recording(false);
    for (int start = 0; start < support.size(); start += eval_batch) {
        const int end = std::min(support.size(), start + eval_batch);
        std::vector<int> idx(static_cast<std::size_t>(end - start));
        for (int i = start; i < end; ++i) idx[static_cast<std::size_t>(i - start)] = i;
        const EennModel::Outputs out = model.forward(tape, support.batch_tensor(idx));
        const std::vector<int> lab = support.batch_labels(idx);
        for (int e = 0; e < B; ++e) {
            const std::vector<int> pred = argmax_rows(out.logits[static_cast<std::size_t>(e)]);
            for (std::size_t s = 0; s < pred.size(); ++s)
                if (pred[s] == lab[s])
                    sm.acc[static_cast<std::size_t>(lab[s]) * B + e] += 1.0;
        }
    }
    for (int j = 0; j < sm.classes; ++j)
        for (int e = 0; e < B; ++e)
            sm.acc[static_cast<std::size_t>(j) * B + e] /= per_class[static_cast<std::size_t>(j)];
    return sm;
}

}  // namespace eenas
