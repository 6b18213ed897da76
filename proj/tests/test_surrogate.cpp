#include "doctest.h"

#include "eenas/kendall.hpp"
#include "eenas/surrogate.hpp"
#include "test_util.hpp"

using namespace eenas;
using namespace testutil;

namespace {

// Independent O(n^2) pair-count oracle for tau-b.
double kendall_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    long long c = 0, d = 0, ta = 0, tb = 0;
    for (std::size_t j = 1; j < n; ++j)
        for (std::size_t i = 0; i < j; ++i) {
            const double x = a[i] - a[j], y = b[i] - b[j];
            if (x == 0 && y == 0) {
                ++ta;
                ++tb;
            } else if (x == 0) {
                ++ta;
            } else if (y == 0) {
                ++tb;
            } else if (x * y > 0) {
                ++c;
            } else {
                ++d;
            }
        }
    const long long n0 = static_cast<long long>(n) * (static_cast<long long>(n) - 1) / 2;
    const double denom =
        std::sqrt(static_cast<double>(n0 - ta)) * std::sqrt(static_cast<double>(n0 - tb));
    return denom == 0.0 ? 0.0 : static_cast<double>(c - d) / denom;
}

std::vector<std::vector<double>> random_features(Rng& rng, int n, int dim) {
    std::vector<std::vector<double>> X(static_cast<std::size_t>(n));
    for (auto& row : X) {
        row.resize(static_cast<std::size_t>(dim));
        for (double& v : row) v = rng.uniform();
    }
    return X;
}

}  // namespace

TEST_SUITE_BEGIN("surrogate");

TEST_CASE("kendall tau: identical, reversed, hand value") {
    CHECK(kendall_tau({1, 2, 3, 4}, {1, 2, 3, 4}) == doctest::Approx(1.0));
    CHECK(kendall_tau({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(kendall_tau({1, 2, 3}, {1, 3, 2}) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(kendall_tau({1, 2}, {1, 2, 3}), ContractError);
}

TEST_CASE("kendall tau equals the pairwise oracle on 1000 random rank pairs") {
    Rng rng(42);
    for (int t = 0; t < 1000; ++t) {
        const int n = rng.uniform_int(2, 24);
        std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            // Coarse levels force ties in roughly half the trials.
            const int levels = t % 2 == 0 ? 4 : 1000;
            a[static_cast<std::size_t>(i)] = rng.uniform_int(0, levels);
            b[static_cast<std::size_t>(i)] = rng.uniform_int(0, levels);
        }
        CHECK(kendall_tau(a, b) == kendall_oracle(a, b));
    }
}

TEST_CASE("rbf interpolates its training points") {
    Rng rng(7);
    const auto X = random_features(rng, 24, 5);
    std::vector<double> y(X.size());
    for (std::size_t i = 0; i < X.size(); ++i)
        y[i] = std::sin(3.0 * X[i][0]) + X[i][1] * X[i][2];
    const auto model = fit_surrogate(SurrogateFamily::RadialBasis, X, y);
    for (std::size_t i = 0; i < X.size(); ++i)
        CHECK(model->predict(X[i]) == doctest::Approx(y[i]).epsilon(1e-3));
}

TEST_CASE("ridge-quadratic recovers a quadratic target") {
    Rng rng(8);
    const auto X = random_features(rng, 60, 4);
    std::vector<double> y(X.size());
    for (std::size_t i = 0; i < X.size(); ++i)
        y[i] = 2.0 + 0.5 * X[i][0] - X[i][3] + 1.5 * X[i][1] * X[i][2];
    const auto model = fit_surrogate(SurrogateFamily::RidgeQuadratic, X, y);
    double max_err = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i)
        max_err = std::max(max_err, std::abs(model->predict(X[i]) - y[i]));
    CHECK(max_err < 0.05);
}

TEST_CASE("knn averages the nearest targets") {
    std::vector<std::vector<double>> X{{0, 0}, {1, 0}, {0, 1}, {10, 10}};
    std::vector<double> y{1.0, 2.0, 3.0, 100.0};
    const auto model = fit_surrogate(SurrogateFamily::NearestNeighbor, X, y);
    CHECK(model->predict({0.1, 0.1}) == doctest::Approx(2.0));  // mean of the 3 close points
}

TEST_CASE("fit_and_switch picks ridge on a linear target") {
    Rng rng(10);
    const auto X = random_features(rng, 40, 6);
    std::vector<double> y(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) y[i] = 3.0 * X[i][0] - 2.0 * X[i][4] + 0.5;
    Rng cv_rng(5);
    const SurrogateSelection sel = fit_and_switch(X, y, cv_rng);
    CHECK(sel.family == SurrogateFamily::RidgeQuadratic);
    CHECK(sel.cv_tau == doctest::Approx(1.0));
}

TEST_CASE("fit_and_switch falls back to the first family on a constant target") {
    Rng rng(11);
    const auto X = random_features(rng, 20, 4);
    const std::vector<double> y(X.size(), 1.25);
    Rng cv_rng(6);
    const SurrogateSelection sel = fit_and_switch(X, y, cv_rng);
    CHECK(sel.family == SurrogateFamily::RadialBasis);  // declared order tie rule
    for (double tau : sel.family_taus) CHECK(tau == 0.0);
}

TEST_CASE("selected family refit scores at least as well as rejected CV taus") {
    Rng rng(12);
    const auto X = random_features(rng, 36, 5);
    std::vector<double> y(X.size());
    for (std::size_t i = 0; i < X.size(); ++i)
        y[i] = X[i][0] * X[i][0] + 0.3 * X[i][1] + 0.05 * std::sin(20.0 * X[i][2]);
    Rng cv_rng(7);
    const SurrogateSelection sel = fit_and_switch(X, y, cv_rng);

    std::vector<double> pred(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) pred[i] = sel.model->predict(X[i]);
    const double refit_tau = kendall_tau(pred, y);
    for (double tau : sel.family_taus) CHECK(refit_tau >= tau - 1e-12);

    for (std::size_t i = 0; i < X.size(); ++i) CHECK(std::isfinite(sel.model->predict(X[i])));
}

TEST_CASE("fit_and_switch requires 10 archive rows") {
    Rng rng(13);
    const auto X = random_features(rng, 9, 3);
    const std::vector<double> y(X.size(), 0.5);
    Rng cv_rng(8);
    CHECK_THROWS_AS(fit_and_switch(X, y, cv_rng), ContractError);
}

TEST_SUITE_END();
