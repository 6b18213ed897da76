#include "eenas/genome.hpp"

#include <algorithm>

#include "eenas/errors.hpp"

namespace eenas {

namespace {

template <std::size_t N>
int index_of(const std::array<int, N>& alphabet, int value, const char* what) {
    for (std::size_t i = 0; i < N; ++i)
        if (alphabet[i] == value) return static_cast<int>(i);
    throw ShapeError(std::string(what) + " value " + std::to_string(value) +
                     " outside its alphabet");
}

}  // namespace

std::vector<int> Genome::chromosome() const {
    std::vector<int> c;
    c.reserve(kNumStages * kGenesPerStage + theta.size());
    for (const StageGene& s : stages) {
        c.push_back(index_of(kDepthChoices, s.depth, "depth"));
        c.push_back(index_of(kKernelChoices, s.kernel, "kernel"));
        c.push_back(index_of(kWidthChoices, s.width, "width"));
    }
    for (int b : theta) c.push_back(b);
    return c;
}

std::vector<int> Genome::alphabet_sizes(int theta_len) {
    std::vector<int> sizes;
    for (int s = 0; s < kNumStages; ++s) {
        sizes.push_back(static_cast<int>(kDepthChoices.size()));
        sizes.push_back(static_cast<int>(kKernelChoices.size()));
        sizes.push_back(static_cast<int>(kWidthChoices.size()));
    }
    for (int i = 0; i < theta_len; ++i) sizes.push_back(2);
    return sizes;
}

Genome Genome::from_chromosome(const std::vector<int>& chrom, int theta_len) {
    const std::size_t expect = kNumStages * kGenesPerStage + static_cast<std::size_t>(theta_len);
    if (chrom.size() != expect)
        throw ShapeError("chromosome length " + std::to_string(chrom.size()) + ", expected " +
                         std::to_string(expect));
    Genome g;
    std::size_t k = 0;
    for (int s = 0; s < kNumStages; ++s) {
        g.stages[s].depth = kDepthChoices.at(chrom[k++]);
        g.stages[s].kernel = kKernelChoices.at(chrom[k++]);
        g.stages[s].width = kWidthChoices.at(chrom[k++]);
    }
    g.theta.assign(chrom.begin() + static_cast<std::ptrdiff_t>(k), chrom.end());
    for (int b : g.theta)
        if (b != 0 && b != 1) throw ShapeError("theta bit " + std::to_string(b) + " not in {0,1}");
    return g;
}

void Genome::validate() const {
    (void)chromosome();  // index_of throws on any out-of-alphabet gene
    for (int b : theta)
        if (b != 0 && b != 1) throw ShapeError("theta bit " + std::to_string(b) + " not in {0,1}");
}

std::string Genome::key() const {
    std::string s;
    for (const StageGene& g : stages)
        s += std::to_string(g.depth) + "." + std::to_string(g.kernel) + "." +
             std::to_string(g.width) + "|";
    for (int b : theta) s += b ? '1' : '0';
    return s;
}

std::uint64_t Genome::hash() const {
    const std::string k = key();
    return fnv1a64(k.data(), k.size());
}

Genome random_genome(Rng& rng, int theta_len) {
    Genome g;
    for (StageGene& s : g.stages) {
        s.depth = kDepthChoices[rng.uniform_index(kDepthChoices.size())];
        s.kernel = kKernelChoices[rng.uniform_index(kKernelChoices.size())];
        s.width = kWidthChoices[rng.uniform_index(kWidthChoices.size())];
    }
    g.theta.resize(theta_len);
    for (int& b : g.theta) b = rng.bernoulli(0.5) ? 1 : 0;
    return g;
}

std::vector<double> genome_features(const Genome& g) {
    const std::vector<int> chrom = g.chromosome();
    const std::vector<int> sizes = Genome::alphabet_sizes(static_cast<int>(g.theta.size()));
    std::vector<double> f(chrom.size());
    for (std::size_t i = 0; i < chrom.size(); ++i)
        f[i] = sizes[i] > 1 ? static_cast<double>(chrom[i]) / (sizes[i] - 1) : 0.0;
    return f;
}

}  // namespace eenas
