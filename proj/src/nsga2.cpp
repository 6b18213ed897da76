#include "eenas/nsga2.hpp"

#include <algorithm>
#include <limits>

#include "eenas/errors.hpp"

namespace eenas {

bool dominates(const Objectives& a, const Objectives& b) {
    return a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
}

std::vector<std::vector<int>> nondominated_sort(const std::vector<Objectives>& points) {
    const int n = static_cast<int>(points.size());
    std::vector<std::vector<int>> dominated(static_cast<std::size_t>(n));
    std::vector<int> dominating(static_cast<std::size_t>(n), 0);
    std::vector<std::vector<int>> fronts;
    std::vector<int> first;

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]))
                dominated[static_cast<std::size_t>(i)].push_back(j);
            else if (dominates(points[static_cast<std::size_t>(j)],
                               points[static_cast<std::size_t>(i)]))
                ++dominating[static_cast<std::size_t>(i)];
        }
    for (int i = 0; i < n; ++i)
        if (dominating[static_cast<std::size_t>(i)] == 0) first.push_back(i);

    fronts.push_back(std::move(first));
    while (!fronts.back().empty()) {
        std::vector<int> next;
        for (int i : fronts.back())
            for (int j : dominated[static_cast<std::size_t>(i)])
                if (--dominating[static_cast<std::size_t>(j)] == 0) next.push_back(j);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

std::vector<double> crowding_distance(const std::vector<Objectives>& points,
                                      const std::vector<int>& front) {
    const std::size_t m = front.size();
    if (m == 0) throw ContractError("crowding_distance: empty front");
    std::vector<double> dist(m, 0.0);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    if (m <= 2) {
        std::fill(dist.begin(), dist.end(), kInf);
        return dist;
    }
    for (int obj = 0; obj < 2; ++obj) {
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < m; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = points[static_cast<std::size_t>(front[a])][static_cast<std::size_t>(obj)];
            const double vb = points[static_cast<std::size_t>(front[b])][static_cast<std::size_t>(obj)];
            if (va != vb) return va < vb;
            return front[a] < front[b];
        });
        const double lo = points[static_cast<std::size_t>(front[order.front()])][static_cast<std::size_t>(obj)];
        const double hi = points[static_cast<std::size_t>(front[order.back()])][static_cast<std::size_t>(obj)];
        dist[order.front()] = kInf;
        dist[order.back()] = kInf;
        const double span = hi - lo;
        if (span <= 0.0) continue;
        for (std::size_t k = 1; k + 1 < m; ++k) {
            if (dist[order[k]] == kInf) continue;
            const double prev =
                points[static_cast<std::size_t>(front[order[k - 1]])][static_cast<std::size_t>(obj)];
            const double next =
                points[static_cast<std::size_t>(front[order[k + 1]])][static_cast<std::size_t>(obj)];
            dist[order[k]] += (next - prev) / span;
        }
    }
    return dist;
}

std::pair<std::vector<int>, std::vector<int>> crossover_mutate(
    const std::vector<int>& pa, const std::vector<int>& pb,
    const std::vector<int>& alphabet_sizes, const GeneticRates& rates, Rng& rng) {
    if (pa.size() != pb.size() || pa.size() != alphabet_sizes.size())
        throw ContractError("crossover_mutate: chromosome length mismatch");
    const std::size_t len = pa.size();
    std::vector<int> c1 = pa, c2 = pb;

    if (len >= 2 && rng.bernoulli(rates.crossover)) {
        std::size_t cut1 = rng.uniform_index(len + 1);
        std::size_t cut2 = rng.uniform_index(len + 1);
        if (cut1 > cut2) std::swap(cut1, cut2);
        for (std::size_t i = cut1; i < cut2; ++i) std::swap(c1[i], c2[i]);
    }

    const double pm = rates.mutation < 0.0 ? 1.0 / static_cast<double>(len) : rates.mutation;
    for (std::vector<int>* child : {&c1, &c2})
        for (std::size_t i = 0; i < len; ++i)
            if (rng.bernoulli(pm))
                (*child)[i] = static_cast<int>(
                    rng.uniform_index(static_cast<std::uint64_t>(alphabet_sizes[i])));
    return {std::move(c1), std::move(c2)};
}

namespace {

// rank, then crowding; fully tied comparisons keep the first candidate.
int tournament(const std::vector<int>& rank, const std::vector<double>& crowd, int a, int b) {
    if (rank[static_cast<std::size_t>(a)] != rank[static_cast<std::size_t>(b)])
        return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)] ? a : b;
    if (crowd[static_cast<std::size_t>(a)] != crowd[static_cast<std::size_t>(b)])
        return crowd[static_cast<std::size_t>(a)] > crowd[static_cast<std::size_t>(b)] ? a : b;
    return a;
}

}  // namespace

std::vector<std::vector<int>> nsga2_generation(
    const std::vector<std::vector<int>>& population, const std::vector<int>& alphabet_sizes,
    const GeneticRates& rates,
    const std::function<std::vector<Objectives>(const std::vector<std::vector<int>>&)>& evaluate,
    Rng& rng) {
    const int n = static_cast<int>(population.size());
    if (n < 2) throw ContractError("nsga2_generation: population too small");

    // Parent fitness for tournaments.
    const std::vector<Objectives> parent_obj = evaluate(population);
    const std::vector<std::vector<int>> parent_fronts = nondominated_sort(parent_obj);
    std::vector<int> rank(static_cast<std::size_t>(n), 0);
    std::vector<double> crowd(static_cast<std::size_t>(n), 0.0);
    for (std::size_t f = 0; f < parent_fronts.size(); ++f) {
        const std::vector<double> d = crowding_distance(parent_obj, parent_fronts[f]);
        for (std::size_t k = 0; k < parent_fronts[f].size(); ++k) {
            rank[static_cast<std::size_t>(parent_fronts[f][k])] = static_cast<int>(f);
            crowd[static_cast<std::size_t>(parent_fronts[f][k])] = d[k];
        }
    }

    std::vector<std::vector<int>> offspring;
    offspring.reserve(static_cast<std::size_t>(n));
    while (static_cast<int>(offspring.size()) < n) {
        const int a = tournament(rank, crowd, rng.uniform_int(0, n - 1), rng.uniform_int(0, n - 1));
        const int b = tournament(rank, crowd, rng.uniform_int(0, n - 1), rng.uniform_int(0, n - 1));
        auto [c1, c2] = crossover_mutate(population[static_cast<std::size_t>(a)],
                                         population[static_cast<std::size_t>(b)], alphabet_sizes,
                                         rates, rng);
        offspring.push_back(std::move(c1));
        if (static_cast<int>(offspring.size()) < n) offspring.push_back(std::move(c2));
    }

    // mu+lambda environmental selection on the merged pool.
    std::vector<std::vector<int>> merged = population;
    merged.insert(merged.end(), offspring.begin(), offspring.end());
    const std::vector<Objectives> merged_obj = evaluate(merged);
    const std::vector<std::vector<int>> fronts = nondominated_sort(merged_obj);

    std::vector<std::vector<int>> next;
    next.reserve(static_cast<std::size_t>(n));
    for (const std::vector<int>& front : fronts) {
        if (static_cast<int>(next.size()) + static_cast<int>(front.size()) <= n) {
            for (int i : front) next.push_back(merged[static_cast<std::size_t>(i)]);
        } else {
            const std::vector<double> d = crowding_distance(merged_obj, front);
            std::vector<std::size_t> order(front.size());
            for (std::size_t i = 0; i < front.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (d[a] != d[b]) return d[a] > d[b];
                return front[a] < front[b];
            });
            for (std::size_t k = 0; static_cast<int>(next.size()) < n; ++k)
                next.push_back(merged[static_cast<std::size_t>(front[order[k]])]);
        }
        if (static_cast<int>(next.size()) == n) break;
    }
    return next;
}

}  // namespace eenas
