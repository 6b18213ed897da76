#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eenas/archive_io.hpp"
#include "eenas/config.hpp"
#include "eenas/report.hpp"
#include "test_util.hpp"

using namespace eenas;
using namespace testutil;

namespace {

ArchiveEntry random_entry(Rng& rng) {
    ArchiveEntry e;
    e.genome = random_genome(rng);
    const int B = rng.uniform_int(1, 4);
    e.gamma_m.resize(static_cast<std::size_t>(B));
    double g = rng.uniform(0.2, 1.0);
    for (int i = 0; i < B; ++i) {
        e.gamma_m[static_cast<std::size_t>(i)] = g;
        g += rng.uniform(0.1, 2.0);
    }
    e.thresholds.assign(static_cast<std::size_t>(B - 1), 0.0);
    for (double& t : e.thresholds) t = rng.uniform_int(0, 9) / 10.0;
    e.util.assign(static_cast<std::size_t>(B), 0.0);
    double left = 1.0;
    for (int i = 0; i < B - 1; ++i) {
        e.util[static_cast<std::size_t>(i)] = left * rng.uniform(0.0, 0.9);
        left -= e.util[static_cast<std::size_t>(i)];
    }
    e.util.back() = left;
    e.fm_m = adaptive_macs(e.gamma_m, e.util);
    e.fa = rng.uniform(0.3, 0.95);
    e.fa_backbone = rng.uniform(0.3, 0.95);
    e.ece.assign(static_cast<std::size_t>(B), 0.0);
    for (double& v : e.ece) v = rng.uniform(0.0, 60.0);
    e.epochs = rng.uniform_int(1, 20);
    e.train_seed = rng.next_u64();
    e.admissible = rng.bernoulli(0.5);

    e.eval_n = rng.uniform_int(3, 8);
    e.conf.resize(static_cast<std::size_t>(e.eval_n) * B);
    e.correct.resize(e.conf.size());
    for (int s = 0; s < e.eval_n; ++s) {
        for (int ex = 0; ex < B; ++ex) {
            e.conf[static_cast<std::size_t>(s) * B + ex] = rng.uniform();
            e.correct[static_cast<std::size_t>(s) * B + ex] = rng.bernoulli(0.5) ? 1 : 0;
        }
        e.conf[static_cast<std::size_t>(s) * B + (B - 1)] = 1.0;
    }
    return e;
}

std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(p);
    return p.string();
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("report");

TEST_CASE("archive save/load is the identity on 100 random archives") {
    Rng rng(505);
    const std::string path =
        (std::filesystem::temp_directory_path() / "eenas_archive_rt.ndjson").string();
    for (int t = 0; t < 100; ++t) {
        std::vector<ArchiveEntry> archive;
        const int n = rng.uniform_int(1, 6);
        for (int i = 0; i < n; ++i) archive.push_back(random_entry(rng));
        save_archive(path, archive);
        const std::vector<ArchiveEntry> back = load_archive(path);
        REQUIRE(back.size() == archive.size());
        for (std::size_t i = 0; i < archive.size(); ++i) {
            CHECK(back[i].genome == archive[i].genome);
            CHECK(back[i].thresholds == archive[i].thresholds);
            CHECK(back[i].fa == archive[i].fa);
            CHECK(back[i].fa_backbone == archive[i].fa_backbone);
            CHECK(back[i].fm_m == archive[i].fm_m);
            CHECK(back[i].util == archive[i].util);
            CHECK(back[i].gamma_m == archive[i].gamma_m);
            CHECK(back[i].ece == archive[i].ece);
            CHECK(back[i].conf == archive[i].conf);
            CHECK(back[i].correct == archive[i].correct);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("a corrupt line rejects the whole archive with its line number") {
    Rng rng(7);
    const std::string path =
        (std::filesystem::temp_directory_path() / "eenas_archive_bad.ndjson").string();
    save_archive(path, {random_entry(rng), random_entry(rng)});
    {
        std::ofstream f(path, std::ios::app);
        f << "{ not json\n";
    }
    CHECK_THROWS_WITH_AS(load_archive(path), doctest::Contains("line 3"), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("older record versions warn and load when they validate") {
    Rng rng(8);
    const std::string path =
        (std::filesystem::temp_directory_path() / "eenas_archive_old.ndjson").string();
    nlohmann::json j = archive_entry_to_json(random_entry(rng));
    j["version"] = "0.0.1";
    {
        std::ofstream f(path, std::ios::trunc);
        f << j.dump() << "\n";
    }
    const std::vector<ArchiveEntry> back = load_archive(path);
    CHECK(back.size() == 1);
    std::filesystem::remove(path);
}

TEST_CASE("results csv: gamma column round-trips the archive values") {
    Rng rng(9);
    std::vector<ArchiveEntry> archive{random_entry(rng)};
    const std::string csv = results_csv(archive, {});
    std::istringstream is(csv);
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    const auto cols = split_csv_row(row);
    const auto head = split_csv_row(header);
    std::size_t gamma_col = 0;
    for (std::size_t i = 0; i < head.size(); ++i)
        if (head[i] == "gamma_m") gamma_col = i;
    // Parse "[a, b, ...]" back and compare exactly.
    std::string body = cols[gamma_col];
    REQUIRE(body.front() == '[');
    body = body.substr(1, body.size() - 2);
    std::vector<double> parsed;
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) parsed.push_back(std::strtod(tok.c_str(), nullptr));
    REQUIRE(parsed.size() == archive[0].gamma_m.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) CHECK(parsed[i] == archive[0].gamma_m[i]);
}

TEST_CASE("pareto svg: constraint lines sit at the configured data coordinates") {
    Rng rng(10);
    std::vector<ArchiveEntry> archive;
    for (int i = 0; i < 6; ++i) archive.push_back(random_entry(rng));
    ReportOptions opt;
    opt.fbar_m_m = 2.7;
    opt.fbar_a = 0.65;
    SvgGeom geom;
    const std::string svg = pareto_svg(archive, opt, &geom);

    const std::string fm_needle = "class=\"constraint-fm\" data-value=\"" +
                                  format_double(2.7) + "\" x1=\"" + format_double(geom.x(2.7));
    CHECK(svg.find(fm_needle) != std::string::npos);
    const std::string fa_needle = "class=\"constraint-fa\" data-value=\"" +
                                  format_double(65.0) + "\" x1=\"";
    CHECK(svg.find(fa_needle) != std::string::npos);
    const std::string fa_y = "y1=\"" + format_double(geom.y(65.0));
    CHECK(svg.find(fa_y) != std::string::npos);
}

TEST_CASE("heatmap: eps1=0 sends every sample to exit 1, so U2 = 0") {
    Rng rng(11);
    ArchiveEntry e = random_entry(rng);
    while (e.gamma_m.size() < 3) e = random_entry(rng);
    const std::string csv = utilization_heatmap_csv(e);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);  // header
    int checked = 0;
    while (std::getline(is, line)) {
        const auto cols = split_csv_row(line);
        if (cols[0] == "0") {
            CHECK(cols.back() == "0");
            ++checked;
        }
    }
    CHECK(checked == 10);  // one per eps2 level
}

TEST_CASE("confidence histogram counts every cached sample per exit") {
    Rng rng(12);
    const ArchiveEntry e = random_entry(rng);
    const std::string csv = confidence_histogram_csv(e);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    std::map<int, int> totals;
    while (std::getline(is, line)) {
        const auto cols = split_csv_row(line);
        totals[std::stoi(cols[0])] += std::stoi(cols[3]);
    }
    const int B = static_cast<int>(e.gamma_m.size());
    REQUIRE(static_cast<int>(totals.size()) == B);
    for (const auto& [exit_idx, n] : totals) CHECK(n == e.eval_n);
}

TEST_CASE("report regeneration is deterministic given the archive") {
    Rng rng(13);
    std::vector<ArchiveEntry> archive;
    for (int i = 0; i < 4; ++i) archive.push_back(random_entry(rng));
    ReportOptions opt;
    const std::string d1 = temp_dir("eenas_report_a");
    const std::string d2 = temp_dir("eenas_report_b");
    emit_report(archive, opt, d1);
    emit_report(archive, opt, d2);
    for (const char* name : {"/results.csv", "/pareto.svg"}) {
        std::ifstream a(d1 + name), b(d2 + name);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("emit_report rejects an empty archive by name") {
    CHECK_THROWS_WITH_AS(emit_report({}, {}, temp_dir("eenas_report_empty")),
                         doctest::Contains("archive contains no entries"), ContractError);
}

TEST_CASE("config schema: unknown keys are all reported") {
    nlohmann::json j = {{"seed", 3},
                        {"bogus_top", 1},
                        {"train", {{"mu", {1, 1, 1}}, {"typo_key", true}}},
                        {"search", {{"n_start", 12}, {"wrong", 0}}}};
    try {
        (void)RunConfig::from_json(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bogus_top") != std::string::npos);
        CHECK(msg.find("train.typo_key") != std::string::npos);
        CHECK(msg.find("search.wrong") != std::string::npos);
    }
}

TEST_CASE("config parses values and propagates constraints into training") {
    nlohmann::json j = {
        {"seed", 11},
        {"dataset", {{"kind", "synthetic"}, {"n_per_class", 60}}},
        {"train", {{"mu", {4, 2, 2}}, {"omega", {1.0, 0.5, 0.25}}, {"batch", 16}}},
        {"search",
         {{"n_start", 16},
          {"constraints", {{"accuracy", 0.55}, {"macs_m", 1.9}}},
          {"n_batch", 4}}}};
    const RunConfig cfg = RunConfig::from_json(j);
    CHECK(cfg.seed == 11);
    CHECK(cfg.train.mu1 == 4);
    CHECK(cfg.train.w2 == 0.5);
    CHECK(cfg.train.fbar_a == 0.55);
    CHECK(cfg.train.fbar_m_m == 1.9);
    CHECK(cfg.search.n_batch == 4);
    CHECK(cfg.search.seed == 11);
    CHECK(cfg.config_hash() == RunConfig::from_json(j).config_hash());
}

TEST_CASE("cli: report on an empty archive exits nonzero with the message") {
    const std::string dir = temp_dir("eenas_cli_empty");
    const std::string cfg_path = dir + "/cfg.json";
    {
        std::ofstream f(cfg_path);
        f << R"({"seed": 1, "out_dir": ")" << dir << R"("})";
    }
    const std::string archive_path = dir + "/archive.ndjson";
    std::ofstream(archive_path).close();

    const std::string cmd = std::string(EENAS_CLI_PATH) + " report --config " + cfg_path +
                            " --archive " + archive_path + " 2> " + dir + "/err.txt";
    const int rc = std::system(cmd.c_str());
    CHECK(rc != 0);
    std::ifstream err(dir + "/err.txt");
    std::string msg((std::istreambuf_iterator<char>(err)), std::istreambuf_iterator<char>());
    CHECK(msg.find("archive contains no entries") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli: train-one with all-zero theta reports B=1 and empty thresholds") {
    const std::string dir = temp_dir("eenas_cli_trainone");
    const std::string cfg_path = dir + "/cfg.json";
    {
        std::ofstream f(cfg_path);
        f << R"({"seed": 2, "out_dir": ")" << dir << R"(",
                 "dataset": {"kind": "synthetic", "n_per_class": 8},
                 "train": {"mu": [1, 0, 0], "batch": 16, "support_per_class": 2}})";
    }
    const std::string cmd = std::string(EENAS_CLI_PATH) + " train-one --config " + cfg_path +
                            " --genome \"1,3,16;1,3,16;1,3,16;1,3,16\" --theta 0000 > " + dir +
                            "/out.txt 2>&1";
    const int rc = std::system(cmd.c_str());
    CHECK(rc == 0);
    std::ifstream out(dir + "/out.txt");
    std::string text((std::istreambuf_iterator<char>(out)), std::istreambuf_iterator<char>());
    CHECK(text.find("B=1") != std::string::npos);
    CHECK(text.find("thresholds=[]") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
