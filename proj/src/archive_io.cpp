#include "eenas/archive_io.hpp"

#include <fstream>
#include <iostream>

#include "eenas/errors.hpp"

namespace eenas {

nlohmann::json archive_entry_to_json(const ArchiveEntry& e) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageGene& s : e.genome.stages)
        stages.push_back({{"depth", s.depth}, {"kernel", s.kernel}, {"width", s.width}});
    return {{"version", kArchiveVersion},
            {"genome", {{"stages", stages}, {"theta", e.genome.theta}}},
            {"thresholds", e.thresholds},
            {"fa", e.fa},
            {"fa_backbone", e.fa_backbone},
            {"fm_m", e.fm_m},
            {"util", e.util},
            {"gamma_m", e.gamma_m},
            {"ece", e.ece},
            {"epochs", e.epochs},
            {"train_seed", e.train_seed},
            {"admissible", e.admissible},
            {"admissibility_flagged", e.admissibility_flagged},
            {"eval_n", e.eval_n},
            {"conf", e.conf},
            {"correct", e.correct}};
}

ArchiveEntry archive_entry_from_json(const nlohmann::json& j) {
    ArchiveEntry e;
    const auto& jg = j.at("genome");
    const auto& stages = jg.at("stages");
    if (stages.size() != kNumStages) throw ParseError("archive record: bad stage count");
    for (std::size_t i = 0; i < kNumStages; ++i) {
        e.genome.stages[i].depth = stages[i].at("depth");
        e.genome.stages[i].kernel = stages[i].at("kernel");
        e.genome.stages[i].width = stages[i].at("width");
    }
    e.genome.theta = jg.at("theta").get<std::vector<int>>();
    e.genome.validate();
    e.thresholds = j.at("thresholds").get<std::vector<double>>();
    e.fa = j.at("fa");
    e.fa_backbone = j.at("fa_backbone");
    e.fm_m = j.at("fm_m");
    e.util = j.at("util").get<std::vector<double>>();
    e.gamma_m = j.at("gamma_m").get<std::vector<double>>();
    e.ece = j.at("ece").get<std::vector<double>>();
    e.epochs = j.at("epochs");
    e.train_seed = j.at("train_seed");
    e.admissible = j.at("admissible");
    e.admissibility_flagged = j.value("admissibility_flagged", false);
    e.eval_n = j.value("eval_n", 0);
    if (j.contains("conf")) e.conf = j.at("conf").get<std::vector<double>>();
    if (j.contains("correct")) e.correct = j.at("correct").get<std::vector<uint8_t>>();

    // Invariants of a measured entry.
    const std::size_t B = e.gamma_m.size();
    if (B == 0) throw ParseError("archive record: empty gamma");
    if (e.util.size() != B || e.thresholds.size() != B - 1 || e.ece.size() != B)
        throw ParseError("archive record: inconsistent exit counts");
    double u = 0.0;
    for (double v : e.util) u += v;
    if (std::abs(u - 1.0) > 1e-6) throw ParseError("archive record: utilizations do not sum to 1");
    for (std::size_t i = 0; i + 1 < B; ++i)
        if (e.gamma_m[i] > e.gamma_m[i + 1]) throw ParseError("archive record: gamma not sorted");
    if (e.eval_n > 0 && (e.conf.size() != static_cast<std::size_t>(e.eval_n) * B ||
                         e.correct.size() != e.conf.size()))
        throw ParseError("archive record: evaluation cache size mismatch");
    return e;
}

void save_archive(const std::string& path, const std::vector<ArchiveEntry>& archive) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ParseError("archive: cannot open for writing: " + path);
    for (const ArchiveEntry& e : archive) f << archive_entry_to_json(e).dump() << "\n";
    if (!f) throw ParseError("archive: write failed: " + path);
}

std::vector<ArchiveEntry> load_archive(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("archive: cannot open: " + path);
    std::vector<ArchiveEntry> out;
    std::string line;
    int lineno = 0;
    bool warned_version = false;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            const std::string version = j.value("version", "");
            if (version != kArchiveVersion && !warned_version) {
                std::cerr << "[warn] archive record version '" << version
                          << "' differs from current '" << kArchiveVersion
                          << "'; loading anyway\n";
                warned_version = true;
            }
            out.push_back(archive_entry_from_json(j));
        } catch (const ParseError&) {
            throw ParseError("archive: invalid record at line " + std::to_string(lineno));
        } catch (const std::exception& e) {
            throw ParseError("archive: invalid record at line " + std::to_string(lineno) + ": " +
                             e.what());
        }
    }
    return out;
}

}  // namespace eenas
