#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "eenas/archive_io.hpp"
#include "eenas/config.hpp"
#include "eenas/eenn_builder.hpp"
#include "eenas/report.hpp"
#include "eenas/search.hpp"

namespace {

using namespace eenas;

Genome parse_genome_flag(const std::string& genome_str, const std::string& theta_str) {
    Genome g;
    std::stringstream ss(genome_str);
    std::string stage;
    int idx = 0;
    while (std::getline(ss, stage, ';')) {
        if (idx >= kNumStages) throw ConfigError("genome: expected 4 stages");
        std::stringstream fs(stage);
        std::string tok;
        int vals[3], k = 0;
        while (std::getline(fs, tok, ',')) {
            if (k >= 3) throw ConfigError("genome: stage needs depth,kernel,width");
            vals[k++] = std::stoi(tok);
        }
        if (k != 3) throw ConfigError("genome: stage needs depth,kernel,width");
        g.stages[static_cast<std::size_t>(idx)] = {vals[0], vals[1], vals[2]};
        ++idx;
    }
    if (idx != kNumStages) throw ConfigError("genome: expected 4 stages");
    for (char c : theta_str) {
        if (c != '0' && c != '1') throw ConfigError("theta: bits must be 0/1");
        g.theta.push_back(c - '0');
    }
    g.validate();
    return g;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

void write_manifest(const RunConfig& cfg, const std::vector<int>& xo,
                    const std::string& archive_path, const ReportPaths& reports) {
    nlohmann::json m = {{"code_version", kCodeVersion},
                        {"config_hash", cfg.config_hash()},
                        {"config", cfg.to_json()},
                        {"archive", archive_path},
                        {"xo_indices", xo},
                        {"reports",
                         {{"results_csv", reports.results_csv},
                          {"pareto_svg", reports.pareto_svg},
                          {"heatmap_csv", reports.heatmap_csv},
                          {"histogram_csv", reports.histogram_csv}}}};
    std::ofstream f(cfg.out_dir + "/manifest.json", std::ios::trunc);
    f << m.dump(2) << "\n";
}

int cmd_search(const RunConfig& cfg, const std::string& resume) {
    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::create_directories(cfg.out_dir + "/checkpoints");
    const Dataset ds = load_dataset(cfg.dataset, cfg.seed);

    std::vector<ArchiveEntry> resume_archive;
    if (!resume.empty()) {
        resume_archive = load_archive(resume);
        std::cerr << "resuming from " << resume << " with " << resume_archive.size()
                  << " entries\n";
    }

    SearchEngine engine(cfg.search,
                        make_training_evaluator(ds, cfg.train, cfg.search.max_exits,
                                                cfg.dataset.classes,
                                                cfg.out_dir + "/checkpoints"));
    const SearchResult result = engine.run(std::move(resume_archive));

    const std::string archive_path = cfg.out_dir + "/archive.ndjson";
    save_archive(archive_path, result.archive);

    ReportOptions opt{cfg.search.fbar_a, cfg.search.fbar_m_m, -1};
    const ReportPaths reports = emit_report(result.archive, opt, cfg.out_dir);
    write_manifest(cfg, result.xo_indices, archive_path, reports);

    std::cout << "archive: " << result.archive.size() << " entries -> " << archive_path << "\n";
    for (int i : result.xo_indices) {
        const ArchiveEntry& e = result.archive[static_cast<std::size_t>(i)];
        std::cout << "X* entry " << i << ": B=" << e.gamma_m.size() << " F_A="
                  << format_double(e.fa * 100.0) << "% F_M=" << format_double(e.fm_m)
                  << "M admissible=" << (e.admissible ? "yes" : "no")
                  << (e.admissibility_flagged ? " (flagged)" : "") << "\n";
    }
    return 0;
}

int cmd_train_one(const RunConfig& cfg, const std::string& genome_str,
                  const std::string& theta_str) {
    std::filesystem::create_directories(cfg.out_dir);
    const Dataset ds = load_dataset(cfg.dataset, cfg.seed);
    const Genome g = parse_genome_flag(genome_str, theta_str);
    if (static_cast<int>(g.theta.size()) != cfg.search.max_exits - 1)
        throw ConfigError("theta: expected " + std::to_string(cfg.search.max_exits - 1) +
                          " bits");

    auto evaluator = make_training_evaluator(ds, cfg.train, cfg.search.max_exits,
                                             cfg.dataset.classes, cfg.out_dir);
    ArchiveEntry e = evaluator(g, mix_seed(cfg.seed, g.hash()));
    e.admissible = e.fa >= cfg.search.fbar_a && e.fm_m <= cfg.search.fbar_m_m;
    save_archive(cfg.out_dir + "/archive.ndjson", {e});

    std::cout << "B=" << e.gamma_m.size() << "\n";
    std::cout << "thresholds=" << nlohmann::json(e.thresholds).dump() << "\n";
    std::cout << "F_A=" << format_double(e.fa * 100.0) << "%\n";
    std::cout << "F_A_backbone=" << format_double(e.fa_backbone * 100.0) << "%\n";
    std::cout << "F_M=" << format_double(e.fm_m) << "M\n";
    std::cout << "gamma=" << nlohmann::json(e.gamma_m).dump() << "M\n";
    std::cout << "U=" << nlohmann::json(e.util).dump() << "\n";
    std::cout << "admissible=" << (e.admissible ? "yes" : "no") << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& spec_path,
             const std::string& thresholds_str) {
    const Dataset ds = load_dataset(cfg.dataset, cfg.seed);
    std::ifstream sf(spec_path);
    if (!sf) throw ConfigError("eval: cannot open spec: " + spec_path);
    nlohmann::json sj;
    sf >> sj;
    const EennSpec spec = EennSpec::from_json(sj);

    EennModel model(spec, 0);
    model.load(checkpoint);

    const DataPipeline data = split_and_batch(ds, 1.0 - cfg.train.val_fraction,
                                              cfg.train.support_per_class, cfg.seed);
    const EvalCache cache = cache_eval(model, data.val);
    std::vector<double> gamma_m(spec.gamma.size());
    for (std::size_t i = 0; i < gamma_m.size(); ++i) gamma_m[i] = to_millions(spec.gamma[i]);

    EvaluationResult eval;
    if (thresholds_str == "auto")
        eval = tune_thresholds(cache, gamma_m, cfg.search.fbar_a, cfg.search.fbar_m_m,
                               cfg.search.constrained);
    else
        eval = evaluate_thresholds(cache, gamma_m, parse_double_list(thresholds_str));

    std::cout << "thresholds=" << nlohmann::json(eval.thresholds).dump() << "\n";
    std::cout << "F_A=" << format_double(eval.fa * 100.0) << "%\n";
    std::cout << "F_A_backbone=" << format_double(eval.fa_backbone * 100.0) << "%\n";
    std::cout << "F_M=" << format_double(eval.fm_m) << "M\n";
    std::cout << "U=" << nlohmann::json(eval.util).dump() << "\n";
    std::cout << "ECE=" << nlohmann::json(eval.ece).dump() << "%\n";
    return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& archive_path, int entry) {
    const std::vector<ArchiveEntry> archive = load_archive(archive_path);
    ReportOptions opt{cfg.search.fbar_a, cfg.search.fbar_m_m, entry};
    const ReportPaths reports = emit_report(archive, opt, cfg.out_dir);
    std::cout << "wrote " << reports.results_csv << "\n";
    std::cout << "wrote " << reports.pareto_svg << "\n";
    if (!reports.heatmap_csv.empty()) std::cout << "wrote " << reports.heatmap_csv << "\n";
    if (!reports.histogram_csv.empty()) std::cout << "wrote " << reports.histogram_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constrained multi-objective search over early-exit CNNs"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    std::string out_override;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", out_override, "override the output directory");
    };

    CLI::App* search = app.add_subcommand("search", "run the full search loop");
    std::string resume;
    add_common(search);
    search->add_option("--resume", resume, "archive to resume from");

    CLI::App* train_one = app.add_subcommand("train-one", "train a single architecture");
    std::string genome_str, theta_str;
    add_common(train_one);
    train_one->add_option("--genome", genome_str, "4 stages 'depth,kernel,width;...'")
        ->required();
    train_one->add_option("--theta", theta_str, "exit placement bits, e.g. 1010")->required();

    CLI::App* eval = app.add_subcommand("eval", "re-evaluate a checkpoint");
    std::string checkpoint, spec_path, thresholds_str = "auto";
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "weight checkpoint (.bin)")->required();
    eval->add_option("--spec", spec_path, "spec JSON emitted next to the checkpoint")->required();
    eval->add_option("--thresholds", thresholds_str, "comma list or 'auto'");

    CLI::App* report = app.add_subcommand("report", "regenerate reports from an archive");
    std::string archive_path;
    int entry = -1;
    add_common(report);
    report->add_option("--archive", archive_path, "archive.ndjson path")->required();
    report->add_option("--entry", entry, "entry index for heatmap/histograms (default: knee)");

    CLI11_PARSE(app, argc, argv);

    try {
        eenas::RunConfig cfg = eenas::RunConfig::from_file(config_path);
        if (seed_set) {
            cfg.seed = seed_override;
            cfg.search.seed = seed_override;
            cfg.train.seed = seed_override;
        }
        if (!out_override.empty()) cfg.out_dir = out_override;

        if (*search) return cmd_search(cfg, resume);
        if (*train_one) return cmd_train_one(cfg, genome_str, theta_str);
        if (*eval) return cmd_eval(cfg, checkpoint, spec_path, thresholds_str);
        if (*report) return cmd_report(cfg, archive_path, entry);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
