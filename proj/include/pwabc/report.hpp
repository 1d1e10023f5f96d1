#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pwabc/kde_estimator.hpp"

namespace pwabc {

/// `theta_1..theta_d,log_density` rows plus a JSON sidecar holding the
/// lattice bounds, point counts and log normaliser.
void write_lattice_posterior(const LatticePosterior& lp, const std::filesystem::path& csv_path);
LatticePosterior read_lattice_posterior(const std::filesystem::path& csv_path);

struct Marginal1D {
  std::vector<double> x, density;
};

/// Marginal density of coordinate k (midpoint rule over the others).
Marginal1D marginal_1d(const LatticePosterior& lp, int k);

struct Marginal2D {
  std::vector<double> x, y;
  Eigen::MatrixXd density;  // rows follow x, columns y
  double cell_area = 0.0;
};

Marginal2D marginal_2d(const LatticePosterior& lp, int i, int j);

/// Density thresholds whose super-level sets hold the given probability
/// masses (highest-density regions).
std::vector<double> contour_levels(const Marginal2D& m, std::span<const double> masses);

/// Density of the cell containing (x, y); zero outside the grid.
double density_at(const Marginal2D& m, double x, double y);

/// True when (x, y) lies inside the highest-density region of the given mass.
bool inside_hpd(const Marginal2D& m, double x, double y, double mass);

/// Centre of the highest cell.
ParamVec lattice_mode(const LatticePosterior& lp);

/// Piecewise-constant transfer of `source` onto `target`, renormalised there.
/// Throws NumericalError when no mass lands on the target lattice.
LatticePosterior resample_lattice(const LatticePosterior& source, const Lattice& target);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

/// Minimal self-contained SVG line plot.
std::string svg_line_plot(const std::string& title, const std::string& x_label, std::span<const PlotSeries> series);

inline constexpr double kContourMasses[] = {0.05, 0.10, 0.50, 0.90, 0.95};

/// Comparison tables and plot files for a run directory, optionally against
/// an oracle directory. Deterministic in its inputs.
void run_report(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& oracle_dir,
                const std::filesystem::path& out_dir);

}  // namespace pwabc
