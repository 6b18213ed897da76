#pragma once

#include <vector>

#include "eenas/errors.hpp"

namespace eenas {

/// Kendall's tau-b: (concordant - discordant) / sqrt((n0-n1)(n0-n2)) with
/// n0 = n(n-1)/2 and n1/n2 the tied-pair counts per side. Returns 0 when a
/// side is constant (the coefficient is undefined there).
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace eenas
