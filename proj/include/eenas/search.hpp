#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eenas/genome.hpp"
#include "eenas/nsga2.hpp"
#include "eenas/trainer.hpp"

namespace eenas {

/// One trained-and-measured candidate. Measured values always come from
/// trainer evaluation, never from surrogates. The confidence cache feeds
/// report heatmaps/histograms without retraining.
struct ArchiveEntry {
    Genome genome;
    std::vector<double> thresholds;
    double fa = 0.0;           // measured early-exit top-1, fraction
    double fa_backbone = 0.0;  // final-exit-only top-1, fraction
    double fm_m = 0.0;         // measured adaptive MACs, millions
    std::vector<double> util;
    std::vector<double> gamma_m;  // millions
    std::vector<double> ece;      // percent
    int epochs = 0;
    std::uint64_t train_seed = 0;
    bool admissible = false;
    bool admissibility_flagged = false;  // true when kept in X-degree despite violating

    // Per-sample evaluation cache (validation set): confidences and
    // correctness per exit, row-major n x exits.
    int eval_n = 0;
    std::vector<double> conf;
    std::vector<uint8_t> correct;
};

struct SearchConfig {
    int n_start = 100;
    int iterations = 10;
    int population = 40;
    int generations = 20;
    int n_batch = 8;  // candidates trained per iteration
    double crossover_rate = 0.9;
    double mutation_rate = -1.0;  // 1/len when negative
    double fbar_a = 0.65;
    double fbar_m_m = 2.7;
    bool constrained = true;
    int k = 1;  // size of the returned trade-off set
    int max_exits = kDefaultMaxExits;
    int threads = 0;  // 0 = hardware concurrency
    std::uint64_t seed = 1;

    void validate() const;
};

struct SearchState {
    std::vector<ArchiveEntry> archive;
    std::vector<std::vector<int>> population;      // chromosomes
    double phi = 0.0;                              // admissible ratio
    std::vector<double> surrogate_taus;            // winner taus (accuracy, macs)
    int iteration = 0;
};

struct SearchResult {
    std::vector<ArchiveEntry> archive;
    std::vector<int> xo_indices;  // indices into archive, best trade-off first
    std::vector<double> hypervolume_trace;
};

/// Fraction of the pool with F_M <= the constraint. Predicted values during
/// surrogate generations, measured values when ranking the archive.
double admissible_ratio(const std::vector<double>& fm_values, double fbar_m_m);

/// Adaptive constraint blend: phi*F_M + (1-phi)*max(0, F_M - constraint).
double fcm(double fm, double fbar_m, double phi);

/// Knee ordering of a Pareto front given as (fm, fa) pairs: min-max
/// normalize both objectives, then sort by perpendicular distance to the
/// segment joining the front's extreme points, descending; ties prefer
/// higher fa. Returns front indices, best trade-off first.
std::vector<int> knee_order(const std::vector<std::pair<double, double>>& front_points);

/// The k best trade-off points of a front (see knee_order).
std::vector<int> select_tradeoff(const std::vector<std::pair<double, double>>& front_points,
                                 int k);

/// 2-D hypervolume of the non-dominated subset of (fm, fa) points
/// (minimize fm, maximize fa) against a reference corner (fm_ref >= all fm,
/// fa_ref <= all fa).
double hypervolume2d(const std::vector<std::pair<double, double>>& points, double fm_ref,
                     double fa_ref);

/// Measured Pareto front of an archive: indices of entries not dominated in
/// (minimize fm_m, maximize fa).
std::vector<int> measured_front(const std::vector<ArchiveEntry>& archive);

using CandidateEvaluator = std::function<ArchiveEntry(const Genome&, std::uint64_t seed)>;

/// Surrogate-assisted constrained NSGA-II search. The evaluator trains and
/// measures one candidate; it runs fan-out parallel across candidates but
/// results join in submission order, keeping archives reproducible.
class SearchEngine {
public:
    SearchEngine(SearchConfig cfg, CandidateEvaluator evaluator);

    SearchResult run(std::vector<ArchiveEntry> resume_archive = {});

    const SearchState& state() const { return state_; }

private:
    std::vector<ArchiveEntry> evaluate_batch(const std::vector<Genome>& genomes);
    std::vector<Genome> initial_sample(Rng& rng, int count,
                                       std::vector<std::string>& seen_keys) const;

    SearchConfig cfg_;
    CandidateEvaluator evaluator_;
    SearchState state_;
};

/// Default evaluator: decode + place exits, train with the given config,
/// tune thresholds on the validation split, package the archive entry.
/// When checkpoint_dir is non-empty, trained weights and the spec JSON are
/// written there as candidate_<hash>.bin / .spec.json.
CandidateEvaluator make_training_evaluator(const Dataset& dataset, const TrainConfig& base,
                                           int max_exits, int classes,
                                           const std::string& checkpoint_dir = {});

}  // namespace eenas
