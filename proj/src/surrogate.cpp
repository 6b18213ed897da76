#include "eenas/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "eenas/errors.hpp"
#include "eenas/kendall.hpp"

namespace eenas {

std::string surrogate_family_name(SurrogateFamily f) {
    switch (f) {
        case SurrogateFamily::RadialBasis: return "rbf";
        case SurrogateFamily::RidgeQuadratic: return "ridge-quadratic";
        case SurrogateFamily::NearestNeighbor: return "knn";
    }
    return "?";
}

namespace {

struct NormStats {
    std::vector<double> mean, scale;

    static NormStats fit(const std::vector<std::vector<double>>& X) {
        const std::size_t d = X[0].size();
        NormStats s;
        s.mean.assign(d, 0.0);
        s.scale.assign(d, 0.0);
        for (const auto& row : X)
            for (std::size_t k = 0; k < d; ++k) s.mean[k] += row[k];
        for (double& m : s.mean) m /= static_cast<double>(X.size());
        for (const auto& row : X)
            for (std::size_t k = 0; k < d; ++k) {
                const double c = row[k] - s.mean[k];
                s.scale[k] += c * c;
            }
        for (double& v : s.scale) {
            v = std::sqrt(v / static_cast<double>(X.size()));
            if (v < 1e-12) v = 1.0;  // constant feature
        }
        return s;
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> out(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
        return out;
    }
};

// Dense symmetric-positive solve via Gaussian elimination with partial
// pivoting. A is n x n row-major, b length n; returns x.
std::vector<double> solve_dense(std::vector<double> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(A[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(A[r * n + col]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-300) throw NumericError("surrogate solve: singular system");
        if (piv != col) {
            for (std::size_t k = 0; k < n; ++k) std::swap(A[piv * n + k], A[col * n + k]);
            std::swap(b[piv], b[col]);
        }
        const double d = A[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r * n + col] / d;
            if (f == 0.0) continue;
            for (std::size_t k = col; k < n; ++k) A[r * n + k] -= f * A[col * n + k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t k = ri + 1; k < n; ++k) s -= A[ri * n + k] * x[k];
        x[ri] = s / A[ri * n + ri];
    }
    return x;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

// Multiquadric interpolator with a small diagonal ridge for stability.
class RbfModel final : public SurrogateModel {
public:
    RbfModel(const std::vector<std::vector<double>>& X, const std::vector<double>& y) {
        stats_ = NormStats::fit(X);
        nodes_.reserve(X.size());
        for (const auto& row : X) nodes_.push_back(stats_.apply(row));
        const std::size_t n = nodes_.size();

        double avg = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                avg += std::sqrt(sq_dist(nodes_[i], nodes_[j]));
                ++pairs;
            }
        r0_ = pairs ? std::max(1e-6, avg / static_cast<double>(pairs)) : 1.0;

        std::vector<double> A(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                A[i * n + j] = basis(sq_dist(nodes_[i], nodes_[j])) + (i == j ? 1e-8 : 0.0);
        weights_ = solve_dense(std::move(A), y);
        for (double w : weights_)
            if (!std::isfinite(w)) throw NumericError("rbf fit produced non-finite weights");
    }

    double predict(const std::vector<double>& features) const override {
        const std::vector<double> x = stats_.apply(features);
        double s = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            s += weights_[i] * basis(sq_dist(nodes_[i], x));
        return s;
    }

    SurrogateFamily family() const override { return SurrogateFamily::RadialBasis; }

private:
    double basis(double r2) const { return std::sqrt(r2 + r0_ * r0_); }

    NormStats stats_;
    std::vector<std::vector<double>> nodes_;
    std::vector<double> weights_;
    double r0_ = 1.0;
};

// Ridge regression on quadratic feature expansion [1, x_i, x_i*x_j (i<=j)].
class RidgeModel final : public SurrogateModel {
public:
    RidgeModel(const std::vector<std::vector<double>>& X, const std::vector<double>& y) {
        stats_ = NormStats::fit(X);
        const std::size_t n = X.size();
        std::vector<std::vector<double>> Phi(n);
        for (std::size_t i = 0; i < n; ++i) Phi[i] = expand(stats_.apply(X[i]));
        const std::size_t d = Phi[0].size();

        std::vector<double> AtA(d * d, 0.0), Aty(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < d; ++a) {
                Aty[a] += Phi[i][a] * y[i];
                for (std::size_t b = 0; b < d; ++b) AtA[a * d + b] += Phi[i][a] * Phi[i][b];
            }
        }
        const double lambda = 1e-3;
        for (std::size_t a = 0; a < d; ++a) AtA[a * d + a] += lambda;
        beta_ = solve_dense(std::move(AtA), std::move(Aty));
        for (double b : beta_)
            if (!std::isfinite(b)) throw NumericError("ridge fit produced non-finite weights");
    }

    double predict(const std::vector<double>& features) const override {
        const std::vector<double> phi = expand(stats_.apply(features));
        double s = 0.0;
        for (std::size_t a = 0; a < phi.size(); ++a) s += beta_[a] * phi[a];
        return s;
    }

    SurrogateFamily family() const override { return SurrogateFamily::RidgeQuadratic; }

private:
    static std::vector<double> expand(const std::vector<double>& x) {
        std::vector<double> phi;
        phi.reserve(1 + x.size() + x.size() * (x.size() + 1) / 2);
        phi.push_back(1.0);
        for (double v : x) phi.push_back(v);
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = i; j < x.size(); ++j) phi.push_back(x[i] * x[j]);
        return phi;
    }

    NormStats stats_;
    std::vector<double> beta_;
};

class KnnModel final : public SurrogateModel {
public:
    KnnModel(const std::vector<std::vector<double>>& X, const std::vector<double>& y, int k = 3)
        : y_(y), k_(std::min<std::size_t>(static_cast<std::size_t>(k), X.size())) {
        stats_ = NormStats::fit(X);
        nodes_.reserve(X.size());
        for (const auto& row : X) nodes_.push_back(stats_.apply(row));
    }

    double predict(const std::vector<double>& features) const override {
        const std::vector<double> x = stats_.apply(features);
        std::vector<std::pair<double, std::size_t>> d(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) d[i] = {sq_dist(nodes_[i], x), i};
        std::sort(d.begin(), d.end());  // index tiebreak keeps this deterministic
        double s = 0.0;
        for (std::size_t i = 0; i < k_; ++i) s += y_[d[i].second];
        return s / static_cast<double>(k_);
    }

    SurrogateFamily family() const override { return SurrogateFamily::NearestNeighbor; }

private:
    NormStats stats_;
    std::vector<std::vector<double>> nodes_;
    std::vector<double> y_;
    std::size_t k_;
};

constexpr SurrogateFamily kFamilies[] = {SurrogateFamily::RadialBasis,
                                         SurrogateFamily::RidgeQuadratic,
                                         SurrogateFamily::NearestNeighbor};

}  // namespace

std::unique_ptr<SurrogateModel> fit_surrogate(SurrogateFamily family,
                                              const std::vector<std::vector<double>>& X,
                                              const std::vector<double>& y) {
    if (X.empty() || X.size() != y.size())
        throw ContractError("fit_surrogate: empty or mismatched training data");
    switch (family) {
        case SurrogateFamily::RadialBasis: return std::make_unique<RbfModel>(X, y);
        case SurrogateFamily::RidgeQuadratic: return std::make_unique<RidgeModel>(X, y);
        case SurrogateFamily::NearestNeighbor: return std::make_unique<KnnModel>(X, y);
    }
    throw ContractError("fit_surrogate: unknown family");
}

SurrogateSelection fit_and_switch(const std::vector<std::vector<double>>& X,
                                  const std::vector<double>& y, Rng& rng) {
    if (X.size() < 10)
        throw ContractError("fit_and_switch: archive too small (" + std::to_string(X.size()) +
                            " rows, need 10)");

    constexpr int kFolds = 5;
    std::vector<int> fold(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) fold[i] = static_cast<int>(i % kFolds);
    rng.shuffle(fold);

    SurrogateSelection sel;
    sel.family = kFamilies[0];
    double best_tau = -2.0;
    for (SurrogateFamily fam : kFamilies) {
        double tau_sum = 0.0;
        int tau_count = 0;
        for (int f = 0; f < kFolds; ++f) {
            std::vector<std::vector<double>> Xtr;
            std::vector<double> ytr, yte;
            std::vector<std::vector<double>> Xte;
            for (std::size_t i = 0; i < X.size(); ++i) {
                if (fold[i] == f) {
                    Xte.push_back(X[i]);
                    yte.push_back(y[i]);
                } else {
                    Xtr.push_back(X[i]);
                    ytr.push_back(y[i]);
                }
            }
            if (Xte.size() < 2 || Xtr.empty()) continue;
            const auto model = fit_surrogate(fam, Xtr, ytr);
            std::vector<double> pred(Xte.size());
            for (std::size_t i = 0; i < Xte.size(); ++i) pred[i] = model->predict(Xte[i]);
            tau_sum += kendall_tau(pred, yte);
            ++tau_count;
        }
        const double mean_tau = tau_count ? tau_sum / tau_count : 0.0;
        sel.family_taus.push_back(mean_tau);
        if (mean_tau > best_tau) {  // strict: ties keep the earlier family
            best_tau = mean_tau;
            sel.family = fam;
        }
    }
    sel.cv_tau = best_tau;
    sel.model = fit_surrogate(sel.family, X, y);
    return sel;
}

}  // namespace eenas
