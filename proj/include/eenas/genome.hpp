#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eenas/rng.hpp"

namespace eenas {

// Search space: 4 stages, each with depth/kernel/width genes, plus
// exit-placement bits theta of length max_exits-1.
inline constexpr int kNumStages = 4;
inline constexpr std::array<int, 3> kDepthChoices = {1, 2, 3};
inline constexpr std::array<int, 2> kKernelChoices = {3, 5};
inline constexpr std::array<int, 3> kWidthChoices = {16, 24, 32};
inline constexpr int kGenesPerStage = 3;
inline constexpr int kDefaultMaxExits = 5;  // includes the final exit

struct StageGene {
    int depth = 1;
    int kernel = 3;
    int width = 16;

    bool operator==(const StageGene&) const = default;
};

struct Genome {
    std::array<StageGene, kNumStages> stages;
    std::vector<int> theta;  // bits, length max_exits-1

    bool operator==(const Genome&) const = default;

    /// Flat index encoding: per stage (depth idx, kernel idx, width idx),
    /// then the theta bits. This is the chromosome crossover/mutation act on.
    std::vector<int> chromosome() const;

    /// Per-position alphabet sizes for the chromosome above.
    static std::vector<int> alphabet_sizes(int theta_len);

    static Genome from_chromosome(const std::vector<int>& chrom, int theta_len);

    /// Throws ShapeError when a gene is outside its alphabet.
    void validate() const;

    std::string key() const;  // stable dedupe key
    std::uint64_t hash() const;
};

Genome random_genome(Rng& rng, int theta_len = kDefaultMaxExits - 1);

/// Surrogate feature vector: each gene mapped to [0,1] by alphabet index,
/// theta bits as 0/1. Dimension = 3*kNumStages + theta_len.
std::vector<double> genome_features(const Genome& g);

}  // namespace eenas
