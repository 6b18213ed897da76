#pragma once

#include <array>
#include <functional>
#include <vector>

#include "eenas/rng.hpp"

namespace eenas {

using Objectives = std::array<double, 2>;  // both minimized

/// True when a dominates b: no worse in both objectives, better in one.
bool dominates(const Objectives& a, const Objectives& b);

/// Fast non-dominated sorting; returns fronts of indices, best first.
std::vector<std::vector<int>> nondominated_sort(const std::vector<Objectives>& points);

/// Standard crowding distances within one front: boundary points infinite,
/// interior points get normalized neighbor-gap sums per objective.
std::vector<double> crowding_distance(const std::vector<Objectives>& points,
                                      const std::vector<int>& front);

struct GeneticRates {
    double crossover = 0.9;
    double mutation = -1.0;  // < 0 selects 1/len per gene
};

/// Two-point crossover on the flat chromosome plus per-gene resampling
/// within each alphabet; offspring are always valid.
std::pair<std::vector<int>, std::vector<int>> crossover_mutate(const std::vector<int>& pa,
                                                               const std::vector<int>& pb,
                                                               const std::vector<int>& alphabet_sizes,
                                                               const GeneticRates& rates,
                                                               Rng& rng);

/// One mu+lambda NSGA-II generation over chromosomes: binary tournaments on
/// (rank, crowding), variation, then environmental selection on the merged
/// pool whose objectives come from `evaluate` (called once per merged pool).
/// The population size is conserved.
std::vector<std::vector<int>> nsga2_generation(
    const std::vector<std::vector<int>>& population, const std::vector<int>& alphabet_sizes,
    const GeneticRates& rates,
    const std::function<std::vector<Objectives>(const std::vector<std::vector<int>>&)>& evaluate,
    Rng& rng);

}  // namespace eenas
