#include "eenas/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "eenas/errors.hpp"

namespace eenas {

namespace {

// Collects unknown keys across the whole tree so one error names them all.
void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& prefix, std::vector<std::string>& offending) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) offending.push_back(prefix + key);
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    std::vector<std::string> offending;
    check_keys(j, {"seed", "out_dir", "dataset", "train", "search"}, "", offending);
    if (j.contains("dataset"))
        check_keys(j.at("dataset"), {"kind", "path", "classes", "size", "n_per_class", "noise"},
                   "dataset.", offending);
    if (j.contains("train"))
        check_keys(j.at("train"),
                   {"mu", "omega", "lambda_e", "joint_mode", "support_per_class", "batch", "lr",
                    "optimizer", "exit_regularizer", "val_fraction"},
                   "train.", offending);
    if (j.contains("search"))
        check_keys(j.at("search"),
                   {"n_start", "iterations", "population", "generations", "n_batch",
                    "crossover_rate", "mutation_rate", "constraints", "constrained", "k",
                    "max_exits", "threads"},
                   "search.", offending);
    if (j.contains("search") && j.at("search").contains("constraints"))
        check_keys(j.at("search").at("constraints"), {"accuracy", "macs_m"},
                   "search.constraints.", offending);
    if (!offending.empty()) {
        std::string msg = "config: unknown key(s):";
        for (const std::string& k : offending) msg += " " + k;
        throw ConfigError(msg);
    }

    RunConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.kind = get_or<std::string>(d, "kind", cfg.dataset.kind);
        cfg.dataset.path = get_or<std::string>(d, "path", cfg.dataset.path);
        cfg.dataset.classes = get_or<int>(d, "classes", cfg.dataset.classes);
        cfg.dataset.size = get_or<int>(d, "size", cfg.dataset.size);
        cfg.dataset.n_per_class = get_or<int>(d, "n_per_class", cfg.dataset.n_per_class);
        cfg.dataset.noise = get_or<double>(d, "noise", cfg.dataset.noise);
        if (cfg.dataset.kind != "synthetic" && cfg.dataset.kind != "cifar10")
            throw ConfigError("config: dataset.kind must be 'synthetic' or 'cifar10'");
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (t.contains("mu")) {
            const auto mu = t.at("mu").get<std::vector<int>>();
            if (mu.size() != 3) throw ConfigError("config: train.mu must have 3 entries");
            cfg.train.mu1 = mu[0];
            cfg.train.mu2 = mu[1];
            cfg.train.mu3 = mu[2];
        }
        if (t.contains("omega")) {
            const auto w = t.at("omega").get<std::vector<double>>();
            if (w.size() != 3) throw ConfigError("config: train.omega must have 3 entries");
            cfg.train.w1 = w[0];
            cfg.train.w2 = w[1];
            cfg.train.w3 = w[2];
        }
        cfg.train.lambda_e = get_or<double>(t, "lambda_e", cfg.train.lambda_e);
        cfg.train.joint_mode = get_or<bool>(t, "joint_mode", cfg.train.joint_mode);
        cfg.train.support_per_class =
            get_or<int>(t, "support_per_class", cfg.train.support_per_class);
        cfg.train.batch = get_or<int>(t, "batch", cfg.train.batch);
        cfg.train.lr = get_or<double>(t, "lr", cfg.train.lr);
        cfg.train.exit_regularizer =
            get_or<bool>(t, "exit_regularizer", cfg.train.exit_regularizer);
        cfg.train.val_fraction = get_or<double>(t, "val_fraction", cfg.train.val_fraction);
        if (t.contains("optimizer")) {
            const std::string o = t.at("optimizer").get<std::string>();
            if (o == "sgd")
                cfg.train.optimizer = OptimAlgo::Sgd;
            else if (o == "adam")
                cfg.train.optimizer = OptimAlgo::AdaptiveMoment;
            else
                throw ConfigError("config: train.optimizer must be 'sgd' or 'adam'");
        }
    }

    if (j.contains("search")) {
        const auto& s = j.at("search");
        cfg.search.n_start = get_or<int>(s, "n_start", cfg.search.n_start);
        cfg.search.iterations = get_or<int>(s, "iterations", cfg.search.iterations);
        cfg.search.population = get_or<int>(s, "population", cfg.search.population);
        cfg.search.generations = get_or<int>(s, "generations", cfg.search.generations);
        cfg.search.n_batch = get_or<int>(s, "n_batch", cfg.search.n_batch);
        cfg.search.crossover_rate = get_or<double>(s, "crossover_rate", cfg.search.crossover_rate);
        cfg.search.mutation_rate = get_or<double>(s, "mutation_rate", cfg.search.mutation_rate);
        cfg.search.constrained = get_or<bool>(s, "constrained", cfg.search.constrained);
        cfg.search.k = get_or<int>(s, "k", cfg.search.k);
        cfg.search.max_exits = get_or<int>(s, "max_exits", cfg.search.max_exits);
        cfg.search.threads = get_or<int>(s, "threads", cfg.search.threads);
        if (s.contains("constraints")) {
            const auto& c = s.at("constraints");
            cfg.search.fbar_a = get_or<double>(c, "accuracy", cfg.search.fbar_a);
            cfg.search.fbar_m_m = get_or<double>(c, "macs_m", cfg.search.fbar_m_m);
        }
    }

    // Constraints and seeds propagate from search into per-candidate training.
    cfg.train.fbar_a = cfg.search.fbar_a;
    cfg.train.fbar_m_m = cfg.search.fbar_m_m;
    cfg.train.constrained = cfg.search.constrained;
    cfg.search.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    return {
        {"seed", seed},
        {"out_dir", out_dir},
        {"dataset",
         {{"kind", dataset.kind},
          {"path", dataset.path},
          {"classes", dataset.classes},
          {"size", dataset.size},
          {"n_per_class", dataset.n_per_class},
          {"noise", dataset.noise}}},
        {"train",
         {{"mu", {train.mu1, train.mu2, train.mu3}},
          {"omega", {train.w1, train.w2, train.w3}},
          {"lambda_e", train.lambda_e},
          {"joint_mode", train.joint_mode},
          {"support_per_class", train.support_per_class},
          {"batch", train.batch},
          {"lr", train.lr},
          {"optimizer", train.optimizer == OptimAlgo::Sgd ? "sgd" : "adam"},
          {"exit_regularizer", train.exit_regularizer},
          {"val_fraction", train.val_fraction}}},
        {"search",
         {{"n_start", search.n_start},
          {"iterations", search.iterations},
          {"population", search.population},
          {"generations", search.generations},
          {"n_batch", search.n_batch},
          {"crossover_rate", search.crossover_rate},
          {"mutation_rate", search.mutation_rate},
          {"constrained", search.constrained},
          {"k", search.k},
          {"max_exits", search.max_exits},
          {"threads", search.threads},
          {"constraints", {{"accuracy", search.fbar_a}, {"macs_m", search.fbar_m_m}}}}},
    };
}

std::string RunConfig::config_hash() const {
    const std::string dump = to_json().dump();
    const std::uint64_t h = fnv1a64(dump.data(), dump.size());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

Dataset load_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
    if (cfg.kind == "synthetic")
        return generate_synthetic(seed, cfg.n_per_class, cfg.classes, cfg.size, cfg.noise);
    if (cfg.kind == "cifar10") {
        if (cfg.path.empty()) throw ConfigError("config: dataset.path required for cifar10");
        return load_cifar10_binary(cfg.path);
    }
    throw ConfigError("config: unknown dataset kind " + cfg.kind);
}

}  // namespace eenas
