#include "eenas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "eenas/errors.hpp"

namespace eenas {

void TrainConfig::validate() const {
    if (mu1 < 0 || mu2 < 0 || mu3 < 0) throw ContractError("train config: negative epoch count");
    if (w1 < 0 || w2 < 0 || w3 < 0) throw ContractError("train config: negative loss weight");
    if (fbar_a <= 0.0 || fbar_a >= 1.0)
        throw ContractError("train config: accuracy constraint must lie in (0,1)");
    if (fbar_m_m <= 0.0) throw ContractError("train config: MAC constraint must be positive");
    if (batch < 1) throw ContractError("train config: batch must be >= 1");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw ContractError("train config: validation fraction must lie in (0,1)");
}

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

// Composite loss of one already-computed forward pass. Peak term only when a
// support matrix is supplied.
Tensor composite_loss(Tape& tape, const EennModel::Outputs& out, const std::vector<int>& labels,
                      const TrainConfig& cfg, const std::vector<double>& gamma_m,
                      const SupportMatrix* sm) {
    Tensor total = ops::mul(tape, loss_acc(tape, out, labels, cfg.exit_regularizer),
                            Tensor::scalar(cfg.w1));
    const int B = static_cast<int>(out.logits.size());
    if (B > 1 && cfg.w2 > 0.0 && cfg.constrained) {
        Tensor gtilde = expected_cost(tape, out.confidences, gamma_m);
        Tensor lc = loss_cost(tape, gtilde, cfg.fbar_m_m, gamma_m.back());
        total = ops::add(tape, total, ops::mul(tape, lc, Tensor::scalar(cfg.w2)));
    }
    if (B > 1 && cfg.w3 > 0.0 && sm != nullptr) {
        Tensor lp = loss_peak(tape, out.confidences, *sm, labels);
        total = ops::add(tape, total, ops::mul(tape, lp, Tensor::scalar(cfg.w3)));
    }
    return total;
}

struct ValScore {
    double loss = 0.0;
    double acc_final = 0.0;
};

ValScore validation_score(const EennModel& model, const Dataset& val, const TrainConfig& cfg,
                          const std::vector<double>& gamma_m, const SupportMatrix& sm) {
    Tape tape;
    tape.set_recording(false);
    double loss_sum = 0.0;
    double correct = 0.0;
    int seen = 0;
    for (int start = 0; start < val.size(); start += cfg.batch) {
        const int end = std::min(val.size(), start + cfg.batch);
        std::vector<int> idx(static_cast<std::size_t>(end - start));
        for (int i = start; i < end; ++i) idx[static_cast<std::size_t>(i - start)] = i;
        const EennModel::Outputs out = model.forward(tape, val.batch_tensor(idx));
        const std::vector<int> lab = val.batch_labels(idx);
        const Tensor l = composite_loss(tape, out, lab, cfg, gamma_m, &sm);
        loss_sum += l.value() * static_cast<double>(idx.size());
        const std::vector<int> pred = argmax_rows(out.logits.back());
        for (std::size_t s = 0; s < pred.size(); ++s)
            if (pred[s] == lab[s]) correct += 1.0;
        seen += static_cast<int>(idx.size());
    }
    return {loss_sum / seen, correct / seen};
}

}  // namespace

TrainResult train_eenn(const EennSpec& spec, const Dataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    const DataPipeline data =
        split_and_batch(dataset, 1.0 - cfg.val_fraction, cfg.support_per_class, cfg.seed);
    if (data.train.size() == 0) throw ContractError("train_eenn: empty training split");

    EennModel model(spec, mix_seed(cfg.seed, 0x1317));
    const std::vector<double> gamma_m = [&] {
        std::vector<double> g(spec.gamma.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = to_millions(spec.gamma[i]);
        return g;
    }();
    if (gamma_m.empty()) throw ContractError("train_eenn: spec has no cost vector; place exits first");

    TrainResult result{std::move(model), {}, -1};
    EennModel& m = result.model;

    Optimizer opt_backbone(m.parameters(/*backbone_and_final_only=*/true),
                           {cfg.optimizer, cfg.lr});
    Optimizer opt_full(m.parameters(), {cfg.optimizer, cfg.lr});

    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_weights = m.snapshot_weights();

    const int total_epochs = cfg.joint_mode ? cfg.mu1 + cfg.mu2 + cfg.mu3 : 0;
    SupportMatrix sm = compute_support_matrix(m, data.support);

    auto run_epoch = [&](int epoch, int phase) {
        const bool backbone_only = !cfg.joint_mode && phase == 1;
        Optimizer& opt = backbone_only ? opt_backbone : opt_full;
        double loss_sum = 0.0;
        int seen = 0;
        for (const std::vector<int>& idx :
             epoch_batches(data.train.size(), cfg.batch, cfg.seed, epoch)) {
            Tape tape;
            const Tensor batch = data.train.batch_tensor(idx);
            const std::vector<int> lab = data.train.batch_labels(idx);
            Tensor loss;
            if (cfg.joint_mode) {
                const EennModel::Outputs out = m.forward(tape, batch);
                loss = loss_joint(tape, out, lab, cfg.lambda_e);
            } else if (backbone_only) {
                const EennModel::Outputs out = m.forward(tape, batch);
                loss = ops::cross_entropy(tape, out.logits.back(), lab);
            } else {
                const EennModel::Outputs out = m.forward(tape, batch);
                TrainConfig phase_cfg = cfg;
                if (phase == 2) phase_cfg.w3 = 0.0;
                loss = composite_loss(tape, out, lab, phase_cfg, gamma_m,
                                      phase == 3 ? &sm : nullptr);
            }
            if (!std::isfinite(loss.value()))
                throw NumericError("train_eenn: non-finite training loss at epoch " +
                                   std::to_string(epoch));
            tape.backward(loss);
            opt.step();
            loss_sum += loss.value() * static_cast<double>(idx.size());
            seen += static_cast<int>(idx.size());
        }

        sm = compute_support_matrix(m, data.support);
        const ValScore val = validation_score(m, data.val, cfg, gamma_m, sm);
        result.trace.push_back({epoch, phase, loss_sum / std::max(1, seen), val.loss,
                                val.acc_final});
        if (val.loss < best_loss) {
            best_loss = val.loss;
            best_weights = m.snapshot_weights();
            result.best_epoch = epoch;
        }
    };

    int epoch = 0;
    if (cfg.joint_mode) {
        for (int e = 0; e < total_epochs; ++e) run_epoch(epoch++, 0);
    } else {
        for (int e = 0; e < cfg.mu1; ++e) run_epoch(epoch++, 1);
        for (int e = 0; e < cfg.mu2; ++e) run_epoch(epoch++, 2);
        // run_epoch refreshes the support matrix after every epoch, so each
        // phase-3 epoch trains against accuracies from the current weights.
        for (int e = 0; e < cfg.mu3; ++e) run_epoch(epoch++, 3);
    }

    if (!result.trace.empty()) m.restore_weights(best_weights);
    return result;
}

EvalCache cache_eval(const EennModel& model, const Dataset& ds, int eval_batch) {
    ds.validate();
    const int B = model.spec().num_exits();
    EvalCache cache;
    cache.n = ds.size();
    cache.exits = B;
    cache.conf.resize(static_cast<std::size_t>(cache.n) * B);
    cache.correct.resize(static_cast<std::size_t>(cache.n) * B);
    cache.final_prob.resize(static_cast<std::size_t>(cache.n));

    Tape tape;
    tape.set_recording(false);
    for (int start = 0; start < ds.size(); start += eval_batch) {
        const int end = std::min(ds.size(), start + eval_batch);
        std::vector<int> idx(static_cast<std::size_t>(end - start));
        for (int i = start; i < end; ++i) idx[static_cast<std::size_t>(i - start)] = i;
        const EennModel::Outputs out = model.forward(tape, ds.batch_tensor(idx));
        const std::vector<int> lab = ds.batch_labels(idx);
        const Tensor final_probs = ops::softmax(tape, out.logits.back());
        const int classes = out.logits.back().dim(1);
        for (int e = 0; e < B; ++e) {
            const std::vector<int> pred = argmax_rows(out.logits[static_cast<std::size_t>(e)]);
            const auto& cd = out.confidences[static_cast<std::size_t>(e)].data();
            for (std::size_t s = 0; s < pred.size(); ++s) {
                const std::size_t row = static_cast<std::size_t>(start) + s;
                cache.conf[row * B + e] = cd[s];
                cache.correct[row * B + e] = pred[s] == lab[s] ? 1 : 0;
            }
        }
        for (std::size_t s = 0; s < idx.size(); ++s) {
            const double* row = final_probs.data().data() + s * classes;
            cache.final_prob[static_cast<std::size_t>(start) + s] =
                *std::max_element(row, row + classes);
        }
    }
    return cache;
}

InferenceOutcome early_exit_inference(const EvalCache& cache,
                                      const std::vector<double>& thresholds) {
    const int B = cache.exits;
    if (static_cast<int>(thresholds.size()) != B - 1)
        throw ContractError("early_exit_inference: " + std::to_string(thresholds.size()) +
                            " thresholds for " + std::to_string(B) + " exits");
    InferenceOutcome out;
    out.exit_index.resize(static_cast<std::size_t>(cache.n));
    out.correct.resize(static_cast<std::size_t>(cache.n));
    for (int s = 0; s < cache.n; ++s) {
        double remaining = 1.0;
        int halt = B - 1;
        for (int e = 0; e < B - 1; ++e) {
            const double score = cache.conf_at(s, e) * remaining;
            if (score >= thresholds[static_cast<std::size_t>(e)]) {
                halt = e;
                break;
            }
            remaining *= 1.0 - cache.conf_at(s, e);
        }
        out.exit_index[static_cast<std::size_t>(s)] = halt;
        out.correct[static_cast<std::size_t>(s)] = cache.correct_at(s, halt) ? 1 : 0;
    }
    return out;
}

InferenceOutcome early_exit_inference(const EennModel& model, const Dataset& ds,
                                      const std::vector<double>& thresholds) {
    return early_exit_inference(cache_eval(model, ds), thresholds);
}

double adaptive_macs(const std::vector<double>& gamma, const std::vector<double>& util) {
    if (gamma.size() != util.size())
        throw ContractError("adaptive_macs: gamma/utilization length mismatch");
    double sum = 0.0;
    for (double u : util) sum += u;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ContractError("adaptive_macs: utilizations sum to " + std::to_string(sum) +
                            ", expected 1");
    double fm = 0.0;
    for (std::size_t i = 0; i < gamma.size(); ++i) fm += gamma[i] * util[i];
    return fm;
}

double compute_ece(const std::vector<double>& confidences, const std::vector<uint8_t>& correct,
                   int bins) {
    if (confidences.empty()) throw ContractError("compute_ece: empty sample set");
    if (confidences.size() != correct.size())
        throw ContractError("compute_ece: confidence/correctness length mismatch");
    std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> acc_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<int> count(static_cast<std::size_t>(bins), 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (c < 0.0 || c > 1.0)
            throw ContractError("compute_ece: confidence " + std::to_string(c) +
                                " outside [0,1]");
        int b = static_cast<int>(c * bins);
        if (b == bins) b = bins - 1;
        conf_sum[static_cast<std::size_t>(b)] += c;
        acc_sum[static_cast<std::size_t>(b)] += correct[i] ? 1.0 : 0.0;
        ++count[static_cast<std::size_t>(b)];
    }
    const double n = static_cast<double>(confidences.size());
    double ece = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (count[static_cast<std::size_t>(b)] == 0) continue;
        const double cb = static_cast<double>(count[static_cast<std::size_t>(b)]);
        ece += (cb / n) * std::abs(conf_sum[static_cast<std::size_t>(b)] / cb -
                                   acc_sum[static_cast<std::size_t>(b)] / cb);
    }
    return 100.0 * ece;
}

EvaluationResult evaluate_thresholds(const EvalCache& cache, const std::vector<double>& gamma_m,
                                     const std::vector<double>& thresholds) {
    const int B = cache.exits;
    if (static_cast<int>(gamma_m.size()) != B)
        throw ContractError("evaluate_thresholds: gamma length mismatch");
    const InferenceOutcome inf = early_exit_inference(cache, thresholds);
    EvaluationResult r;
    r.thresholds = thresholds;
    r.gamma_m = gamma_m;
    r.util.assign(static_cast<std::size_t>(B), 0.0);
    double correct_ee = 0.0, correct_bb = 0.0;
    for (int s = 0; s < cache.n; ++s) {
        r.util[static_cast<std::size_t>(inf.exit_index[static_cast<std::size_t>(s)])] += 1.0;
        correct_ee += inf.correct[static_cast<std::size_t>(s)] ? 1.0 : 0.0;
        correct_bb += cache.correct_at(s, B - 1) ? 1.0 : 0.0;
    }
    for (double& u : r.util) u /= cache.n;
    r.fa = correct_ee / cache.n;
    r.fa_backbone = correct_bb / cache.n;
    r.fm_m = adaptive_macs(gamma_m, r.util);
    r.ece.resize(static_cast<std::size_t>(B));
    for (int e = 0; e < B; ++e) {
        std::vector<double> conf(static_cast<std::size_t>(cache.n));
        std::vector<uint8_t> corr(static_cast<std::size_t>(cache.n));
        for (int s = 0; s < cache.n; ++s) {
            // The final exit's halting confidence is fixed at 1, so its
            // calibration is measured on the max softmax probability.
            conf[static_cast<std::size_t>(s)] =
                e == B - 1 ? cache.final_prob[static_cast<std::size_t>(s)] : cache.conf_at(s, e);
            corr[static_cast<std::size_t>(s)] = cache.correct_at(s, e) ? 1 : 0;
        }
        r.ece[static_cast<std::size_t>(e)] = compute_ece(conf, corr);
    }
    return r;
}

namespace {

// F_A / F_M of a threshold vector without building the full result. F_M is
// accumulated exactly as adaptive_macs does, so tuning decisions and the
// reported evaluation agree bit for bit.
std::pair<double, double> score_thresholds(const EvalCache& cache,
                                           const std::vector<double>& gamma_m,
                                           const std::vector<double>& eps) {
    const int B = cache.exits;
    double correct = 0.0;
    std::vector<double> util(static_cast<std::size_t>(B), 0.0);
    for (int s = 0; s < cache.n; ++s) {
        double remaining = 1.0;
        int halt = B - 1;
        for (int e = 0; e < B - 1; ++e) {
            const double score = cache.conf_at(s, e) * remaining;
            if (score >= eps[static_cast<std::size_t>(e)]) {
                halt = e;
                break;
            }
            remaining *= 1.0 - cache.conf_at(s, e);
        }
        correct += cache.correct_at(s, halt) ? 1.0 : 0.0;
        util[static_cast<std::size_t>(halt)] += 1.0;
    }
    for (double& u : util) u /= cache.n;
    double fm = 0.0;
    for (std::size_t i = 0; i < util.size(); ++i) fm += gamma_m[i] * util[i];
    return {correct / cache.n, fm};
}

}  // namespace

EvaluationResult tune_thresholds(const EvalCache& cache, const std::vector<double>& gamma_m,
                                 double fbar_a, double fbar_m_m, bool constrained) {
    const int B = cache.exits;
    if (B == 1) return evaluate_thresholds(cache, gamma_m, {});

    const int levels = 10;  // grid {0.0, 0.1, ..., 0.9}
    std::vector<double> eps(static_cast<std::size_t>(B - 1), 0.0);
    std::vector<double> best_eps;
    double best_fa = -1.0, best_fm = 0.0;

    // Exhaustive grid in lexicographic order; ties keep the lower F_M and
    // then the earliest (lexicographically smallest) vector.
    std::vector<int> digits(static_cast<std::size_t>(B - 1), 0);
    while (true) {
        for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = digits[i] / 10.0;
        const auto [fa, fm] = score_thresholds(cache, gamma_m, eps);
        if (fa > best_fa || (fa == best_fa && fm < best_fm)) {
            best_fa = fa;
            best_fm = fm;
            best_eps = eps;
        }
        int pos = static_cast<int>(digits.size()) - 1;
        while (pos >= 0 && digits[static_cast<std::size_t>(pos)] == levels - 1) {
            digits[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
        ++digits[static_cast<std::size_t>(pos)];
    }

    if (constrained) {
        // Reduce thresholds from the second-last exit down while the MAC
        // constraint is violated and the accuracy constraint tolerates it.
        double fa = best_fa, fm = best_fm;
        for (int e = B - 2; e >= 0 && fm > fbar_m_m; --e) {
            while (fm > fbar_m_m && best_eps[static_cast<std::size_t>(e)] > 0.0) {
                std::vector<double> cand = best_eps;
                cand[static_cast<std::size_t>(e)] =
                    std::max(0.0, cand[static_cast<std::size_t>(e)] - 0.1);
                const auto [cfa, cfm] = score_thresholds(cache, gamma_m, cand);
                if (cfa >= fbar_a) {
                    best_eps = cand;
                    fa = cfa;
                    fm = cfm;
                } else {
                    break;
                }
            }
        }
        (void)fa;
    }
    return evaluate_thresholds(cache, gamma_m, best_eps);
}

}  // namespace eenas
