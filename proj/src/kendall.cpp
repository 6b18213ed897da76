#include "eenas/kendall.hpp"

#include <cmath>

namespace eenas {

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ContractError("kendall_tau: length mismatch " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
    const std::size_t n = a.size();
    if (n < 2) throw ContractError("kendall_tau: need at least 2 observations");

    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            if (da == 0.0 && db == 0.0) {
                ++ties_a;
                ++ties_b;
            } else if (da == 0.0) {
                ++ties_a;
            } else if (db == 0.0) {
                ++ties_b;
            } else if ((da > 0.0) == (db > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }

    const long long n0 = static_cast<long long>(n) * (static_cast<long long>(n) - 1) / 2;
    const double denom = std::sqrt(static_cast<double>(n0 - ties_a)) *
                         std::sqrt(static_cast<double>(n0 - ties_b));
    if (denom == 0.0) return 0.0;
    return static_cast<double>(concordant - discordant) / denom;
}

}  // namespace eenas
