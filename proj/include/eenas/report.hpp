#pragma once

#include <string>
#include <vector>

#include "eenas/search.hpp"

namespace eenas {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Linear data->pixel mapping used by the Pareto SVG; exposed so consumers
/// can locate data-space coordinates in the plot.
struct SvgGeom {
    double fm_lo = 0.0, fm_hi = 1.0;  // data range, MACs in millions
    double fa_lo = 0.0, fa_hi = 1.0;  // data range, accuracy percent
    int width = 640, height = 480;
    int margin = 56;

    double x(double fm_m) const {
        return margin + (fm_m - fm_lo) / (fm_hi - fm_lo) * (width - 2 * margin);
    }
    double y(double fa_pct) const {
        return height - margin - (fa_pct - fa_lo) / (fa_hi - fa_lo) * (height - 2 * margin);
    }
};

struct ReportOptions {
    double fbar_a = 0.65;    // fraction
    double fbar_m_m = 2.7;   // millions
    int detail_entry = -1;   // heatmap/histogram target; -1 = knee entry
};

/// One row per archive entry, the paper's column layout. The report layer
/// adds only the Pareto flag and the knee marker.
std::string results_csv(const std::vector<ArchiveEntry>& archive, const ReportOptions& opt);

/// Scatter of (F_M, F_A) with the measured front highlighted and dashed
/// constraint lines at the configured coordinates.
std::string pareto_svg(const std::vector<ArchiveEntry>& archive, const ReportOptions& opt,
                       SvgGeom* geom_out = nullptr);

/// Threshold sweep on the cached confidences of one entry: utilization of
/// the second exit over the (eps_1, eps_2) grid (eps_1-only when B == 2).
std::string utilization_heatmap_csv(const ArchiveEntry& entry);

/// Per-exit confidence histograms, 20 equal bins over [0,1].
std::string confidence_histogram_csv(const ArchiveEntry& entry, int bins = 20);

struct ReportPaths {
    std::string results_csv;
    std::string pareto_svg;
    std::string heatmap_csv;
    std::string histogram_csv;
};

/// Writes all report artifacts into out_dir; returns their paths.
ReportPaths emit_report(const std::vector<ArchiveEntry>& archive, const ReportOptions& opt,
                        const std::string& out_dir);

}  // namespace eenas
