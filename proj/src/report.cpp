#include "eenas/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eenas/errors.hpp"

namespace eenas {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::string format_list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_double(v[i]);
    }
    return s + "]";
}

std::string percent_list(const std::vector<double>& v) {
    std::vector<double> pct(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) pct[i] = v[i] * 100.0;
    return format_list(pct);
}

int knee_entry_index(const std::vector<ArchiveEntry>& archive) {
    const std::vector<int> front = measured_front(archive);
    std::vector<std::pair<double, double>> pts;
    for (int i : front)
        pts.emplace_back(archive[static_cast<std::size_t>(i)].fm_m,
                         archive[static_cast<std::size_t>(i)].fa);
    return front[static_cast<std::size_t>(knee_order(pts)[0])];
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ParseError("report: cannot open for writing: " + path);
    f << content;
    if (!f) throw ParseError("report: write failed: " + path);
}

}  // namespace

std::string results_csv(const std::vector<ArchiveEntry>& archive, const ReportOptions& opt) {
    if (archive.empty()) throw ContractError("archive contains no entries");
    const std::vector<int> front = measured_front(archive);
    std::vector<bool> on_front(archive.size(), false);
    for (int i : front) on_front[static_cast<std::size_t>(i)] = true;
    const int knee = knee_entry_index(archive);

    std::ostringstream os;
    os << "entry,B,fm_adaptive_m,fm_backbone_m,fa_ee_pct,fa_backbone_pct,thresholds,"
          "utilization_pct,gamma_m,ece_pct,epochs,train_seed,admissible,pareto,knee\n";
    for (std::size_t i = 0; i < archive.size(); ++i) {
        const ArchiveEntry& e = archive[i];
        os << i << "," << e.gamma_m.size() << "," << format_double(e.fm_m) << ","
           << format_double(e.gamma_m.back()) << "," << format_double(e.fa * 100.0) << ","
           << format_double(e.fa_backbone * 100.0) << ",\"" << format_list(e.thresholds)
           << "\",\"" << percent_list(e.util) << "\",\"" << format_list(e.gamma_m) << "\",\""
           << format_list(e.ece) << "\"," << e.epochs << "," << e.train_seed << ","
           << (e.admissible ? 1 : 0) << "," << (on_front[i] ? 1 : 0) << ","
           << (static_cast<int>(i) == knee ? 1 : 0) << "\n";
    }
    (void)opt;
    return os.str();
}

std::string pareto_svg(const std::vector<ArchiveEntry>& archive, const ReportOptions& opt,
                       SvgGeom* geom_out) {
    if (archive.empty()) throw ContractError("archive contains no entries");
    SvgGeom g;
    g.fm_lo = archive[0].fm_m;
    g.fm_hi = archive[0].fm_m;
    g.fa_lo = archive[0].fa * 100.0;
    g.fa_hi = archive[0].fa * 100.0;
    for (const ArchiveEntry& e : archive) {
        g.fm_lo = std::min(g.fm_lo, e.fm_m);
        g.fm_hi = std::max(g.fm_hi, e.fm_m);
        g.fa_lo = std::min(g.fa_lo, e.fa * 100.0);
        g.fa_hi = std::max(g.fa_hi, e.fa * 100.0);
    }
    g.fm_lo = std::min(g.fm_lo, opt.fbar_m_m);
    g.fm_hi = std::max(g.fm_hi, opt.fbar_m_m);
    g.fa_lo = std::min(g.fa_lo, opt.fbar_a * 100.0);
    g.fa_hi = std::max(g.fa_hi, opt.fbar_a * 100.0);
    const double fm_pad = std::max(1e-9, (g.fm_hi - g.fm_lo) * 0.05);
    const double fa_pad = std::max(1e-9, (g.fa_hi - g.fa_lo) * 0.05);
    g.fm_lo -= fm_pad;
    g.fm_hi += fm_pad;
    g.fa_lo -= fa_pad;
    g.fa_hi += fa_pad;
    if (geom_out) *geom_out = g;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << g.width << "\" height=\""
       << g.height << "\" viewBox=\"0 0 " << g.width << " " << g.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << g.width / 2 << "\" y=\"" << g.height - 12
       << "\" text-anchor=\"middle\" font-size=\"13\">adaptive MACs (M)</text>\n";
    os << "<text x=\"16\" y=\"" << g.height / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
       << "transform=\"rotate(-90 16 " << g.height / 2 << ")\">top-1 accuracy (%)</text>\n";

    // Constraint lines at the configured coordinates.
    os << "<line class=\"constraint-fm\" data-value=\"" << format_double(opt.fbar_m_m)
       << "\" x1=\"" << format_double(g.x(opt.fbar_m_m)) << "\" y1=\"" << g.margin << "\" x2=\""
       << format_double(g.x(opt.fbar_m_m)) << "\" y2=\"" << g.height - g.margin
       << "\" stroke=\"purple\" stroke-dasharray=\"6 3\"/>\n";
    os << "<line class=\"constraint-fa\" data-value=\"" << format_double(opt.fbar_a * 100.0)
       << "\" x1=\"" << g.margin << "\" y1=\"" << format_double(g.y(opt.fbar_a * 100.0))
       << "\" x2=\"" << g.width - g.margin << "\" y2=\""
       << format_double(g.y(opt.fbar_a * 100.0)) << "\" stroke=\"red\" stroke-dasharray=\"6 3\"/>\n";

    // Measured front polyline, cheap to expensive.
    const std::vector<int> front = measured_front(archive);
    std::vector<int> sorted_front = front;
    std::sort(sorted_front.begin(), sorted_front.end(), [&](int a, int b) {
        return archive[static_cast<std::size_t>(a)].fm_m < archive[static_cast<std::size_t>(b)].fm_m;
    });
    os << "<polyline fill=\"none\" stroke=\"#2266cc\" stroke-width=\"1.5\" points=\"";
    for (int i : sorted_front)
        os << format_double(g.x(archive[static_cast<std::size_t>(i)].fm_m)) << ","
           << format_double(g.y(archive[static_cast<std::size_t>(i)].fa * 100.0)) << " ";
    os << "\"/>\n";

    std::vector<bool> on_front(archive.size(), false);
    for (int i : front) on_front[static_cast<std::size_t>(i)] = true;
    const int knee = knee_entry_index(archive);
    for (std::size_t i = 0; i < archive.size(); ++i) {
        const ArchiveEntry& e = archive[i];
        const char* fill = static_cast<int>(i) == knee   ? "#cc3322"
                           : on_front[i]                 ? "#2266cc"
                           : e.admissible                ? "#44aa44"
                                                         : "#999999";
        os << "<circle class=\"entry\" data-index=\"" << i << "\" cx=\""
           << format_double(g.x(e.fm_m)) << "\" cy=\"" << format_double(g.y(e.fa * 100.0))
           << "\" r=\"" << (static_cast<int>(i) == knee ? 5 : 3) << "\" fill=\"" << fill
           << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string utilization_heatmap_csv(const ArchiveEntry& entry) {
    const int B = static_cast<int>(entry.gamma_m.size());
    if (B < 2) throw ContractError("heatmap: entry has no early exits");
    if (entry.eval_n <= 0)
        throw ContractError("heatmap: entry carries no cached confidences");

    EvalCache cache;
    cache.n = entry.eval_n;
    cache.exits = B;
    cache.conf = entry.conf;
    cache.correct = entry.correct;
    cache.final_prob.assign(static_cast<std::size_t>(entry.eval_n), 1.0);

    std::ostringstream os;
    const bool has_eps2 = B >= 3;
    os << (has_eps2 ? "eps1,eps2,u2\n" : "eps1,u2\n");
    for (int d1 = 0; d1 <= 9; ++d1) {
        for (int d2 = 0; d2 <= (has_eps2 ? 9 : 0); ++d2) {
            std::vector<double> eps = entry.thresholds;
            eps[0] = d1 / 10.0;
            if (has_eps2) eps[1] = d2 / 10.0;
            const InferenceOutcome inf = early_exit_inference(cache, eps);
            double u2 = 0.0;
            for (int idx : inf.exit_index)
                if (idx == 1) u2 += 1.0;
            u2 /= cache.n;
            if (has_eps2)
                os << format_double(d1 / 10.0) << "," << format_double(d2 / 10.0) << ","
                   << format_double(u2) << "\n";
            else
                os << format_double(d1 / 10.0) << "," << format_double(u2) << "\n";
        }
    }
    return os.str();
}

std::string confidence_histogram_csv(const ArchiveEntry& entry, int bins) {
    const int B = static_cast<int>(entry.gamma_m.size());
    if (entry.eval_n <= 0)
        throw ContractError("histogram: entry carries no cached confidences");
    std::ostringstream os;
    os << "exit,bin_lo,bin_hi,count\n";
    for (int e = 0; e < B; ++e) {
        std::vector<int> hist(static_cast<std::size_t>(bins), 0);
        for (int s = 0; s < entry.eval_n; ++s) {
            const double c = entry.conf[static_cast<std::size_t>(s) * B + e];
            int b = static_cast<int>(c * bins);
            if (b == bins) b = bins - 1;
            ++hist[static_cast<std::size_t>(b)];
        }
        for (int b = 0; b < bins; ++b)
            os << e + 1 << "," << format_double(static_cast<double>(b) / bins) << ","
               << format_double(static_cast<double>(b + 1) / bins) << ","
               << hist[static_cast<std::size_t>(b)] << "\n";
    }
    return os.str();
}

ReportPaths emit_report(const std::vector<ArchiveEntry>& archive, const ReportOptions& opt,
                        const std::string& out_dir) {
    if (archive.empty()) throw ContractError("archive contains no entries");
    std::filesystem::create_directories(out_dir);
    int detail = opt.detail_entry;
    if (detail < 0) detail = knee_entry_index(archive);
    if (detail >= static_cast<int>(archive.size()))
        throw ContractError("report: entry index " + std::to_string(detail) + " out of range");

    ReportPaths paths;
    paths.results_csv = out_dir + "/results.csv";
    paths.pareto_svg = out_dir + "/pareto.svg";
    paths.heatmap_csv = out_dir + "/utilization_heatmap_entry" + std::to_string(detail) + ".csv";
    paths.histogram_csv = out_dir + "/confidence_hist_entry" + std::to_string(detail) + ".csv";

    write_file(paths.results_csv, results_csv(archive, opt));
    write_file(paths.pareto_svg, pareto_svg(archive, opt));
    const ArchiveEntry& e = archive[static_cast<std::size_t>(detail)];
    if (e.gamma_m.size() >= 2 && e.eval_n > 0)
        write_file(paths.heatmap_csv, utilization_heatmap_csv(e));
    else
        paths.heatmap_csv.clear();
    if (e.eval_n > 0)
        write_file(paths.histogram_csv, confidence_histogram_csv(e));
    else
        paths.histogram_csv.clear();
    return paths;
}

}  // namespace eenas
