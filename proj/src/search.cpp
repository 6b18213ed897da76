#include "eenas/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "eenas/eenn_builder.hpp"
#include "eenas/errors.hpp"
#include "eenas/surrogate.hpp"

namespace eenas {

void SearchConfig::validate() const {
    if (n_start < 2) throw ContractError("search config: n_start must be >= 2");
    if (n_batch < 1) throw ContractError("search config: n_batch must be >= 1");
    if (population < 2) throw ContractError("search config: population must be >= 2");
    if (iterations < 0 || generations < 1) throw ContractError("search config: bad loop sizes");
    if (k < 1) throw ContractError("search config: k must be >= 1");
    if (max_exits < 2) throw ContractError("search config: max_exits must be >= 2");
    const int feature_dim = kNumStages * kGenesPerStage + (max_exits - 1);
    if (n_start < 2 * feature_dim)
        std::cerr << "[warn] n_start " << n_start << " below 2x feature dimension "
                  << 2 * feature_dim << "; surrogate fits may be weak\n";
}

double admissible_ratio(const std::vector<double>& fm_values, double fbar_m_m) {
    if (fm_values.empty()) throw ContractError("admissible_ratio: empty population");
    double count = 0.0;
    for (double fm : fm_values)
        if (fm <= fbar_m_m) count += 1.0;
    return count / static_cast<double>(fm_values.size());
}

double fcm(double fm, double fbar_m, double phi) {
    if (phi < 0.0 || phi > 1.0)
        throw ContractError("fcm: phi " + std::to_string(phi) + " outside [0,1]");
    return phi * fm + (1.0 - phi) * std::max(0.0, fm - fbar_m);
}

namespace {

struct NormalizedFront {
    std::vector<std::pair<double, double>> pts;  // (fm, fa) scaled to [0,1]
};

NormalizedFront normalize(const std::vector<std::pair<double, double>>& points) {
    double fm_lo = points[0].first, fm_hi = points[0].first;
    double fa_lo = points[0].second, fa_hi = points[0].second;
    for (const auto& [fm, fa] : points) {
        fm_lo = std::min(fm_lo, fm);
        fm_hi = std::max(fm_hi, fm);
        fa_lo = std::min(fa_lo, fa);
        fa_hi = std::max(fa_hi, fa);
    }
    const double fm_span = fm_hi - fm_lo > 0 ? fm_hi - fm_lo : 1.0;
    const double fa_span = fa_hi - fa_lo > 0 ? fa_hi - fa_lo : 1.0;
    NormalizedFront out;
    out.pts.reserve(points.size());
    for (const auto& [fm, fa] : points)
        out.pts.emplace_back((fm - fm_lo) / fm_span, (fa - fa_lo) / fa_span);
    return out;
}

}  // namespace

std::vector<int> knee_order(const std::vector<std::pair<double, double>>& front_points) {
    if (front_points.empty()) throw ContractError("knee_order: empty front");
    const int n = static_cast<int>(front_points.size());
    if (n == 1) return {0};

    const NormalizedFront nf = normalize(front_points);
    // Extreme points: cheapest (lowest fm) and most accurate (highest fa);
    // ties broken toward the other objective.
    int lo = 0, hi = 0;
    for (int i = 1; i < n; ++i) {
        const auto& p = nf.pts[static_cast<std::size_t>(i)];
        const auto& pl = nf.pts[static_cast<std::size_t>(lo)];
        const auto& ph = nf.pts[static_cast<std::size_t>(hi)];
        if (p.first < pl.first || (p.first == pl.first && p.second > pl.second)) lo = i;
        if (p.second > ph.second || (p.second == ph.second && p.first < ph.first)) hi = i;
    }
    const double ax = nf.pts[static_cast<std::size_t>(lo)].first;
    const double ay = nf.pts[static_cast<std::size_t>(lo)].second;
    const double bx = nf.pts[static_cast<std::size_t>(hi)].first;
    const double by = nf.pts[static_cast<std::size_t>(hi)].second;
    const double dx = bx - ax, dy = by - ay;
    const double len = std::sqrt(dx * dx + dy * dy);

    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto& p = nf.pts[static_cast<std::size_t>(i)];
        if (len < 1e-15) {
            const double ux = p.first - ax, uy = p.second - ay;
            dist[static_cast<std::size_t>(i)] = std::sqrt(ux * ux + uy * uy);
        } else {
            dist[static_cast<std::size_t>(i)] =
                std::abs(dx * (ay - p.second) - dy * (ax - p.first)) / len;
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist[static_cast<std::size_t>(a)] != dist[static_cast<std::size_t>(b)])
            return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
        if (front_points[static_cast<std::size_t>(a)].second !=
            front_points[static_cast<std::size_t>(b)].second)
            return front_points[static_cast<std::size_t>(a)].second >
                   front_points[static_cast<std::size_t>(b)].second;
        return a < b;
    });
    return order;
}

std::vector<int> select_tradeoff(const std::vector<std::pair<double, double>>& front_points,
                                 int k) {
    std::vector<int> order = knee_order(front_points);
    if (static_cast<int>(order.size()) > k) order.resize(static_cast<std::size_t>(k));
    return order;
}

double hypervolume2d(const std::vector<std::pair<double, double>>& points, double fm_ref,
                     double fa_ref) {
    // Keep the non-dominated subset (minimize fm, maximize fa).
    std::vector<std::pair<double, double>> front;
    for (const auto& p : points) {
        bool dominated = false;
        for (const auto& q : points)
            if ((q.first < p.first && q.second >= p.second) ||
                (q.first <= p.first && q.second > p.second)) {
                dominated = true;
                break;
            }
        if (!dominated && p.first <= fm_ref && p.second >= fa_ref) front.push_back(p);
    }
    std::sort(front.begin(), front.end());
    front.erase(std::unique(front.begin(), front.end()), front.end());
    double hv = 0.0;
    double prev_fm = fm_ref;
    for (std::size_t i = front.size(); i-- > 0;) {
        // Sweep from the most expensive point toward the cheapest.
        hv += (prev_fm - front[i].first) * (front[i].second - fa_ref);
        prev_fm = front[i].first;
    }
    return hv;
}

std::vector<int> measured_front(const std::vector<ArchiveEntry>& archive) {
    std::vector<int> front;
    for (std::size_t i = 0; i < archive.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < archive.size(); ++j) {
            if (i == j) continue;
            const bool no_worse =
                archive[j].fm_m <= archive[i].fm_m && archive[j].fa >= archive[i].fa;
            const bool better = archive[j].fm_m < archive[i].fm_m || archive[j].fa > archive[i].fa;
            if (no_worse && better) {
                dominated = true;
                break;
            }
        }
        if (!dominated) front.push_back(static_cast<int>(i));
    }
    return front;
}

SearchEngine::SearchEngine(SearchConfig cfg, CandidateEvaluator evaluator)
    : cfg_(cfg), evaluator_(std::move(evaluator)) {
    cfg_.validate();
}

std::vector<ArchiveEntry> SearchEngine::evaluate_batch(const std::vector<Genome>& genomes) {
    std::vector<ArchiveEntry> results(genomes.size());
    std::vector<uint8_t> done(genomes.size(), 0);
    const unsigned hw = std::thread::hardware_concurrency();
    const unsigned workers = std::min<unsigned>(
        cfg_.threads > 0 ? static_cast<unsigned>(cfg_.threads) : (hw ? hw : 2),
        static_cast<unsigned>(genomes.size()));

    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(genomes.size());
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= genomes.size()) return;
            const std::uint64_t seed = mix_seed(cfg_.seed, genomes[i].hash());
            try {
                results[i] = evaluator_(genomes[i], seed);
                done[i] = 1;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }

    // Failed candidates are logged and skipped, never imputed.
    std::vector<ArchiveEntry> out;
    for (std::size_t i = 0; i < genomes.size(); ++i) {
        if (done[i]) {
            out.push_back(std::move(results[i]));
        } else {
            std::cerr << "[warn] candidate " << genomes[i].key() << " failed: " << errors[i]
                      << "\n";
        }
    }
    return out;
}

std::vector<Genome> SearchEngine::initial_sample(Rng& rng, int count,
                                                 std::vector<std::string>& seen_keys) const {
    std::set<std::string> seen(seen_keys.begin(), seen_keys.end());
    std::vector<Genome> out;
    int guard = 0;
    while (static_cast<int>(out.size()) < count && guard < count * 1000) {
        Genome g = random_genome(rng, cfg_.max_exits - 1);
        if (seen.insert(g.key()).second) out.push_back(std::move(g));
        ++guard;
    }
    seen_keys.assign(seen.begin(), seen.end());
    return out;
}

SearchResult SearchEngine::run(std::vector<ArchiveEntry> resume_archive) {
    SearchResult result;
    SearchState& st = state_;
    st.archive = std::move(resume_archive);

    std::vector<std::string> seen_keys;
    for (const ArchiveEntry& e : st.archive) seen_keys.push_back(e.genome.key());

    const auto features = [](const Genome& g) { return genome_features(g); };
    const std::vector<int> alphabet = Genome::alphabet_sizes(cfg_.max_exits - 1);

    // Initial random sampling (skipped when resuming past it).
    if (static_cast<int>(st.archive.size()) < cfg_.n_start) {
        Rng init_rng(mix_seed(cfg_.seed, 0x1217));
        const std::vector<Genome> init =
            initial_sample(init_rng, cfg_.n_start - static_cast<int>(st.archive.size()),
                           seen_keys);
        std::vector<ArchiveEntry> evaluated = evaluate_batch(init);
        for (ArchiveEntry& e : evaluated) st.archive.push_back(std::move(e));
    }

    auto mark_admissible = [&](ArchiveEntry& e) {
        e.admissible = e.fa >= cfg_.fbar_a && e.fm_m <= cfg_.fbar_m_m;
    };
    for (ArchiveEntry& e : st.archive) mark_admissible(e);

    auto record_hypervolume = [&]() {
        if (st.archive.empty()) return;
        std::vector<std::pair<double, double>> pts;
        for (const ArchiveEntry& e : st.archive) pts.emplace_back(e.fm_m, e.fa);
        double fm_ref = pts[0].first, fa_ref = pts[0].second;
        for (const auto& [fm, fa] : pts) {
            fm_ref = std::max(fm_ref, fm);
            fa_ref = std::min(fa_ref, fa);
        }
        result.hypervolume_trace.push_back(hypervolume2d(pts, fm_ref, fa_ref));
    };
    record_hypervolume();

    const int completed_iterations =
        cfg_.n_batch > 0
            ? std::max(0, (static_cast<int>(st.archive.size()) - cfg_.n_start) / cfg_.n_batch)
            : 0;

    for (int it = completed_iterations; it < cfg_.iterations; ++it) {
        st.iteration = it + 1;
        if (static_cast<int>(st.archive.size()) < 10) {
            std::cerr << "[warn] archive too small for surrogates; stopping search loop\n";
            break;
        }
        Rng iter_rng(mix_seed(cfg_.seed, 0xA5A50000ULL + static_cast<std::uint64_t>(it)));

        // Fit and adaptively switch both surrogates on the archive.
        std::vector<std::vector<double>> X;
        std::vector<double> y_acc, y_fm;
        for (const ArchiveEntry& e : st.archive) {
            X.push_back(features(e.genome));
            y_acc.push_back(e.fa);
            y_fm.push_back(e.fm_m);
        }
        SurrogateSelection s_acc = fit_and_switch(X, y_acc, iter_rng);
        SurrogateSelection s_fm = fit_and_switch(X, y_fm, iter_rng);
        st.surrogate_taus = {s_acc.cv_tau, s_fm.cv_tau};

        // Population seeded from the archive's measured ranking.
        {
            std::vector<double> measured_fm;
            for (const ArchiveEntry& e : st.archive) measured_fm.push_back(e.fm_m);
            const double phi_arch =
                cfg_.constrained ? admissible_ratio(measured_fm, cfg_.fbar_m_m) : 1.0;
            std::vector<Objectives> obj;
            for (const ArchiveEntry& e : st.archive)
                obj.push_back({-e.fa, cfg_.constrained ? fcm(e.fm_m, cfg_.fbar_m_m, phi_arch)
                                                       : e.fm_m});
            const auto fronts = nondominated_sort(obj);
            st.population.clear();
            for (const auto& front : fronts) {
                std::vector<double> d = crowding_distance(obj, front);
                std::vector<std::size_t> order(front.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    if (d[a] != d[b]) return d[a] > d[b];
                    return front[a] < front[b];
                });
                for (std::size_t k : order) {
                    if (static_cast<int>(st.population.size()) >= cfg_.population) break;
                    st.population.push_back(
                        st.archive[static_cast<std::size_t>(front[k])].genome.chromosome());
                }
                if (static_cast<int>(st.population.size()) >= cfg_.population) break;
            }
            while (static_cast<int>(st.population.size()) < cfg_.population)
                st.population.push_back(random_genome(iter_rng, cfg_.max_exits - 1).chromosome());
        }

        // Surrogate objectives: phi over the evaluated pool, then
        // (-S_A, S_CM) per candidate.
        auto evaluate_pool = [&](const std::vector<std::vector<int>>& pool) {
            std::vector<double> pred_fm(pool.size()), pred_fa(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const Genome g = Genome::from_chromosome(pool[i], cfg_.max_exits - 1);
                const std::vector<double> f = features(g);
                pred_fa[i] = s_acc.model->predict(f);
                pred_fm[i] = s_fm.model->predict(f);
            }
            st.phi = cfg_.constrained ? admissible_ratio(pred_fm, cfg_.fbar_m_m) : 1.0;
            std::vector<Objectives> obj(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i)
                obj[i] = {-pred_fa[i], cfg_.constrained ? fcm(pred_fm[i], cfg_.fbar_m_m, st.phi)
                                                        : pred_fm[i]};
            return obj;
        };

        GeneticRates rates{cfg_.crossover_rate, cfg_.mutation_rate};
        for (int g = 0; g < cfg_.generations; ++g)
            st.population = nsga2_generation(st.population, alphabet, rates, evaluate_pool,
                                             iter_rng);

        // Candidate pick: predicted front by crowding distance, skipping
        // archive duplicates; top up from later fronts, then random unseen.
        std::vector<Genome> picked;
        {
            const std::vector<Objectives> obj = evaluate_pool(st.population);
            const auto fronts = nondominated_sort(obj);
            std::set<std::string> seen(seen_keys.begin(), seen_keys.end());
            std::set<std::string> in_batch;
            for (const auto& front : fronts) {
                if (static_cast<int>(picked.size()) >= cfg_.n_batch) break;
                std::vector<double> d = crowding_distance(obj, front);
                std::vector<std::size_t> order(front.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    if (d[a] != d[b]) return d[a] > d[b];
                    return front[a] < front[b];
                });
                for (std::size_t k : order) {
                    if (static_cast<int>(picked.size()) >= cfg_.n_batch) break;
                    Genome g = Genome::from_chromosome(
                        st.population[static_cast<std::size_t>(front[k])], cfg_.max_exits - 1);
                    const std::string key = g.key();
                    if (seen.count(key) || in_batch.count(key)) continue;
                    in_batch.insert(key);
                    picked.push_back(std::move(g));
                }
            }
            int guard = 0;
            while (static_cast<int>(picked.size()) < cfg_.n_batch && guard++ < 100000) {
                Genome g = random_genome(iter_rng, cfg_.max_exits - 1);
                const std::string key = g.key();
                if (seen.count(key) || in_batch.count(key)) continue;
                in_batch.insert(key);
                picked.push_back(std::move(g));
            }
        }

        std::vector<ArchiveEntry> evaluated = evaluate_batch(picked);
        for (ArchiveEntry& e : evaluated) {
            mark_admissible(e);
            seen_keys.push_back(e.genome.key());
            st.archive.push_back(std::move(e));
        }
        record_hypervolume();
    }

    // X-degree: the k admissible entries closest to the knee of the measured
    // Pareto front; short sets are topped up with least-violating entries,
    // flagged as such.
    result.archive = st.archive;
    if (!st.archive.empty()) {
        const std::vector<int> front = measured_front(st.archive);
        std::vector<std::pair<double, double>> front_pts;
        for (int i : front)
            front_pts.emplace_back(st.archive[static_cast<std::size_t>(i)].fm_m,
                                   st.archive[static_cast<std::size_t>(i)].fa);
        const int knee_idx = front[static_cast<std::size_t>(knee_order(front_pts)[0])];

        // Distances in normalized objective space over the whole archive.
        double fm_lo = st.archive[0].fm_m, fm_hi = st.archive[0].fm_m;
        double fa_lo = st.archive[0].fa, fa_hi = st.archive[0].fa;
        for (const ArchiveEntry& e : st.archive) {
            fm_lo = std::min(fm_lo, e.fm_m);
            fm_hi = std::max(fm_hi, e.fm_m);
            fa_lo = std::min(fa_lo, e.fa);
            fa_hi = std::max(fa_hi, e.fa);
        }
        const double fm_span = fm_hi - fm_lo > 0 ? fm_hi - fm_lo : 1.0;
        const double fa_span = fa_hi - fa_lo > 0 ? fa_hi - fa_lo : 1.0;
        const double kx = (st.archive[static_cast<std::size_t>(knee_idx)].fm_m - fm_lo) / fm_span;
        const double ky = (st.archive[static_cast<std::size_t>(knee_idx)].fa - fa_lo) / fa_span;
        auto knee_dist = [&](const ArchiveEntry& e) {
            const double x = (e.fm_m - fm_lo) / fm_span - kx;
            const double y = (e.fa - fa_lo) / fa_span - ky;
            return std::sqrt(x * x + y * y);
        };

        std::vector<int> admissible_idx, violating_idx;
        for (std::size_t i = 0; i < st.archive.size(); ++i)
            (st.archive[i].admissible ? admissible_idx : violating_idx)
                .push_back(static_cast<int>(i));

        std::sort(admissible_idx.begin(), admissible_idx.end(), [&](int a, int b) {
            const double da = knee_dist(st.archive[static_cast<std::size_t>(a)]);
            const double db = knee_dist(st.archive[static_cast<std::size_t>(b)]);
            if (da != db) return da < db;
            return a < b;
        });
        auto violation = [&](const ArchiveEntry& e) {
            return std::max(0.0, cfg_.fbar_a - e.fa) / cfg_.fbar_a +
                   std::max(0.0, e.fm_m - cfg_.fbar_m_m) / cfg_.fbar_m_m;
        };
        std::sort(violating_idx.begin(), violating_idx.end(), [&](int a, int b) {
            const double va = violation(st.archive[static_cast<std::size_t>(a)]);
            const double vb = violation(st.archive[static_cast<std::size_t>(b)]);
            if (va != vb) return va < vb;
            return a < b;
        });

        for (int i : admissible_idx) {
            if (static_cast<int>(result.xo_indices.size()) >= cfg_.k) break;
            result.xo_indices.push_back(i);
        }
        for (int i : violating_idx) {
            if (static_cast<int>(result.xo_indices.size()) >= cfg_.k) break;
            result.archive[static_cast<std::size_t>(i)].admissibility_flagged = true;
            result.xo_indices.push_back(i);
        }
    }
    return result;
}

CandidateEvaluator make_training_evaluator(const Dataset& dataset, const TrainConfig& base,
                                           int max_exits, int classes,
                                           const std::string& checkpoint_dir) {
    // The dataset is captured by reference-semantics copy once; candidates
    // share it read-only.
    auto shared = std::make_shared<Dataset>(dataset);
    return [shared, base, max_exits, classes, checkpoint_dir](const Genome& g,
                                                              std::uint64_t seed) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        const EennSpec backbone = decode_genome(g, classes, shared->height, shared->channels);
        const EennSpec spec = place_exits(backbone, g.theta, max_exits);
        TrainResult trained = train_eenn(spec, *shared, cfg);
        if (!checkpoint_dir.empty()) {
            std::ostringstream hex;
            hex << std::hex << g.hash();
            const std::string base_path = checkpoint_dir + "/candidate_" + hex.str();
            trained.model.save(base_path + ".bin");
            std::ofstream sf(base_path + ".spec.json", std::ios::trunc);
            sf << spec.to_json().dump(2) << "\n";
        }

        const DataPipeline data =
            split_and_batch(*shared, 1.0 - cfg.val_fraction, cfg.support_per_class, cfg.seed);
        const EvalCache cache = cache_eval(trained.model, data.val);
        std::vector<double> gamma_m(spec.gamma.size());
        for (std::size_t i = 0; i < gamma_m.size(); ++i) gamma_m[i] = to_millions(spec.gamma[i]);
        const EvaluationResult eval =
            tune_thresholds(cache, gamma_m, cfg.fbar_a, cfg.fbar_m_m, cfg.constrained);

        ArchiveEntry e;
        e.genome = g;
        e.thresholds = eval.thresholds;
        e.fa = eval.fa;
        e.fa_backbone = eval.fa_backbone;
        e.fm_m = eval.fm_m;
        e.util = eval.util;
        e.gamma_m = gamma_m;
        e.ece = eval.ece;
        e.epochs = static_cast<int>(trained.trace.size());
        e.train_seed = seed;
        e.eval_n = cache.n;
        e.conf = cache.conf;
        e.correct = cache.correct;
        return e;
    };
}

}  // namespace eenas
