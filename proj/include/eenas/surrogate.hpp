#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eenas/rng.hpp"

namespace eenas {

enum class SurrogateFamily { RadialBasis, RidgeQuadratic, NearestNeighbor };

std::string surrogate_family_name(SurrogateFamily f);

/// A fitted regressor over normalized feature vectors. Predictions are
/// finite for any in-range input.
class SurrogateModel {
public:
    virtual ~SurrogateModel() = default;
    virtual double predict(const std::vector<double>& features) const = 0;
    virtual SurrogateFamily family() const = 0;
};

/// Fits one family on (X, y). X rows are feature vectors of equal length.
std::unique_ptr<SurrogateModel> fit_surrogate(SurrogateFamily family,
                                              const std::vector<std::vector<double>>& X,
                                              const std::vector<double>& y);

struct SurrogateSelection {
    std::unique_ptr<SurrogateModel> model;
    SurrogateFamily family;
    double cv_tau = 0.0;                // mean held-out Kendall tau of the winner
    std::vector<double> family_taus;    // per family, declared order
};

/// Adaptive switching: every family is scored by 5-fold cross-validated
/// Kendall tau against y; the best mean tau wins (ties fall back to the
/// first family in declared order) and is refitted on the full data.
/// Requires at least 10 rows.
SurrogateSelection fit_and_switch(const std::vector<std::vector<double>>& X,
                                  const std::vector<double>& y, Rng& rng);

}  // namespace eenas
