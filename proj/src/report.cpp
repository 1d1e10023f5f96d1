#include "pwabc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pwabc/dataset_io.hpp"
#include "pwabc/error.hpp"
#include "pwabc/oracle.hpp"
#include "pwabc/run_config.hpp"

namespace pwabc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::size_t> strides(const Lattice& lat) {
  std::vector<std::size_t> s(static_cast<std::size_t>(lat.dim()), 1);
  for (int k = lat.dim() - 2; k >= 0; --k) s[k] = s[k + 1] * static_cast<std::size_t>(lat.points_per_dim()[k + 1]);
  return s;
}

std::string pair_name(int i, int j) {
  return "theta_" + std::to_string(i + 1) + "_theta_" + std::to_string(j + 1);
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("missing artifact " + path.string());
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("corrupt artifact " + path.string() + ": " + e.what());
  }
}

std::string cell(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

}  // namespace

void write_lattice_posterior(const LatticePosterior& lp, const fs::path& csv_path) {
  const auto& lat = lp.lattice;
  const int d = lat.dim();
  std::string out;
  out.reserve(lp.log_density.size() * 24 * static_cast<std::size_t>(d + 1));
  for (int k = 1; k <= d; ++k) out += "theta_" + std::to_string(k) + ",";
  out += "log_density\n";
  ParamVec x(d);
  for (std::size_t i = 0; i < lp.log_density.size(); ++i) {
    lat.cell_center(i, x);
    for (int k = 0; k < d; ++k) {
      out += format_real(x[k]);
      out += ',';
    }
    out += format_real(lp.log_density[i]);
    out += '\n';
  }
  write_text(csv_path, out);

  json meta;
  meta["lower"] = std::vector<double>(lat.lower().begin(), lat.lower().end());
  meta["upper"] = std::vector<double>(lat.upper().begin(), lat.upper().end());
  meta["points_per_dim"] = lat.points_per_dim();
  meta["log_normaliser"] = lp.log_normaliser;
  write_text(sidecar_path(csv_path), meta.dump(2) + "\n");
}

LatticePosterior read_lattice_posterior(const fs::path& csv_path) {
  const auto meta = read_json(sidecar_path(csv_path));
  const auto lo = meta.at("lower").get<std::vector<double>>();
  const auto hi = meta.at("upper").get<std::vector<double>>();
  LatticePosterior lp;
  lp.lattice = Lattice(Eigen::Map<const ParamVec>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                       Eigen::Map<const ParamVec>(hi.data(), static_cast<Eigen::Index>(hi.size())),
                       meta.at("points_per_dim").get<std::vector<int>>());
  lp.log_normaliser = meta.at("log_normaliser").get<double>();
  lp.log_density.reserve(lp.lattice.cell_count());

  const std::string text = read_text(csv_path);
  std::size_t pos = text.find('\n');
  while (pos != std::string::npos && pos + 1 < text.size()) {
    const std::size_t end = text.find('\n', pos + 1);
    const std::size_t last_comma = text.rfind(',', end == std::string::npos ? text.size() : end);
    if (last_comma == std::string::npos || last_comma < pos) throw ConfigError("malformed lattice file " + csv_path.string());
    lp.log_density.push_back(parse_real(text.substr(last_comma + 1, (end == std::string::npos ? text.size() : end) - last_comma - 1)));
    pos = end;
  }
  if (lp.log_density.size() != lp.lattice.cell_count())
    throw ConfigError("lattice file " + csv_path.string() + " does not match its sidecar");
  return lp;
}

Marginal1D marginal_1d(const LatticePosterior& lp, int k) {
  const auto& lat = lp.lattice;
  const auto st = strides(lat);
  const auto nk = static_cast<std::size_t>(lat.points_per_dim()[k]);
  Marginal1D out;
  out.x.resize(nk);
  out.density.assign(nk, 0.0);
  for (std::size_t i = 0; i < nk; ++i) out.x[i] = lat.coordinate(k, static_cast<int>(i));
  const double scale = lat.cell_volume() / lat.width(k);
  for (std::size_t c = 0; c < lp.log_density.size(); ++c)
    out.density[(c / st[k]) % nk] += std::exp(lp.log_density[c]) * scale;
  return out;
}

Marginal2D marginal_2d(const LatticePosterior& lp, int i, int j) {
  const auto& lat = lp.lattice;
  const auto st = strides(lat);
  const auto ni = static_cast<std::size_t>(lat.points_per_dim()[i]);
  const auto nj = static_cast<std::size_t>(lat.points_per_dim()[j]);
  Marginal2D out;
  for (std::size_t a = 0; a < ni; ++a) out.x.push_back(lat.coordinate(i, static_cast<int>(a)));
  for (std::size_t b = 0; b < nj; ++b) out.y.push_back(lat.coordinate(j, static_cast<int>(b)));
  out.cell_area = lat.width(i) * lat.width(j);
  out.density = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(nj));
  const double scale = lat.cell_volume() / out.cell_area;
  for (std::size_t c = 0; c < lp.log_density.size(); ++c)
    out.density((c / st[i]) % ni, (c / st[j]) % nj) += std::exp(lp.log_density[c]) * scale;
  return out;
}

std::vector<double> contour_levels(const Marginal2D& m, std::span<const double> masses) {
  std::vector<double> values(m.density.data(), m.density.data() + m.density.size());
  std::sort(values.begin(), values.end(), std::greater<>());
  const double total = std::accumulate(values.begin(), values.end(), 0.0) * m.cell_area;
  std::vector<double> out;
  for (double mass : masses) {
    double acc = 0.0;
    double level = values.empty() ? 0.0 : values.back();
    for (double v : values) {
      acc += v * m.cell_area;
      if (acc >= mass * total) {
        level = v;
        break;
      }
    }
    out.push_back(level);
  }
  return out;
}

double density_at(const Marginal2D& m, double x, double y) {
  if (m.x.size() < 2 || m.y.size() < 2) return 0.0;
  const double wx = m.x[1] - m.x[0], wy = m.y[1] - m.y[0];
  const double fx = std::floor((x - (m.x[0] - 0.5 * wx)) / wx);
  const double fy = std::floor((y - (m.y[0] - 0.5 * wy)) / wy);
  if (fx < 0 || fy < 0 || fx >= static_cast<double>(m.x.size()) || fy >= static_cast<double>(m.y.size())) return 0.0;
  return m.density(static_cast<Eigen::Index>(fx), static_cast<Eigen::Index>(fy));
}

bool inside_hpd(const Marginal2D& m, double x, double y, double mass) {
  const double level = contour_levels(m, std::span<const double>(&mass, 1)).front();
  const double v = density_at(m, x, y);
  return v > 0.0 && v >= level;
}

ParamVec lattice_mode(const LatticePosterior& lp) {
  const auto it = std::max_element(lp.log_density.begin(), lp.log_density.end());
  return lp.lattice.cell_center(static_cast<std::size_t>(it - lp.log_density.begin()));
}

LatticePosterior resample_lattice(const LatticePosterior& source, const Lattice& target) {
  return evaluate_on_lattice(target, [&](const ParamVec& theta) { return source.log_density_at(theta); });
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, std::span<const PlotSeries> series) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  static const char* kColours[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0.0;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > 0)) y1 = 1.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - y / y1 * ph; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y1 * t / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(xv)
      << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = kColours[s % std::size(kColours)];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      o << num(px(series[s].x[i])) << ',' << num(py(series[s].y[i])) << ' ';
    o << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(s);
    o << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kLeft + pw + 36 << "\" y=\"" << ly + 4 << "\">" << series[s].name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void run_report(const fs::path& run_dir, const std::optional<fs::path>& oracle_dir, const fs::path& out_dir) {
  if (!fs::exists(run_dir / "config.json")) throw ConfigError("missing artifact " + (run_dir / "config.json").string());
  const auto cfg = parse_run_config(read_text(run_dir / "config.json"));
  const auto lm = read_json(run_dir / "log_marginal.json");
  const int d = cfg.model.param_dim();
  const auto names = cfg.model.param_names();

  std::optional<LatticePosterior> oracle;
  std::optional<double> oracle_lm;
  if (oracle_dir) {
    oracle = read_lattice_posterior(*oracle_dir / "oracle_lattice.csv");
    oracle_lm = read_json(*oracle_dir / "oracle.json").at("log_marginal_true").get<double>();
    if (oracle->lattice.dim() != d) throw ConfigError("oracle and run have different parameter dimensions");
  }
  std::optional<json> gaussian_summary;
  if (fs::exists(run_dir / "gaussian_posterior.json")) gaussian_summary = read_json(run_dir / "gaussian_posterior.json");

  std::vector<std::pair<std::string, LatticePosterior>> sources;
  if (oracle) sources.emplace_back("oracle", *oracle);
  for (const char* name : {"gaussian", "kde"}) {
    const auto path = run_dir / (std::string(name) + "_lattice.csv");
    if (fs::exists(path)) sources.emplace_back(name, read_lattice_posterior(path));
  }
  if (sources.empty() && !gaussian_summary) throw ConfigError("run directory has no posterior artifacts");

  fs::create_directories(out_dir / "marginals");
  for (int k = 0; k < d; ++k) {
    std::vector<PlotSeries> series;
    for (const auto& [name, lp] : sources) {
      const auto m = marginal_1d(lp, k);
      std::string csv = "theta,density\n";
      for (std::size_t i = 0; i < m.x.size(); ++i) csv += format_real(m.x[i]) + "," + format_real(m.density[i]) + "\n";
      write_text(out_dir / "marginals" / (name + "_theta_" + std::to_string(k + 1) + ".csv"), csv);
      series.push_back({name, m.x, m.density});
    }
    if (!series.empty())
      write_text(out_dir / "marginals" / ("theta_" + std::to_string(k + 1) + ".svg"),
                 svg_line_plot("posterior marginal of " + names[k], names[k], series));
  }

  if (d >= 2) {
    fs::create_directories(out_dir / "contours");
    for (const auto& [name, lp] : sources) {
      for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
          const auto m = marginal_2d(lp, i, j);
          const auto levels = contour_levels(m, kContourMasses);
          std::string csv = "mass,density_level\n";
          for (std::size_t l = 0; l < levels.size(); ++l)
            csv += format_real(kContourMasses[l]) + "," + format_real(levels[l]) + "\n";
          write_text(out_dir / "contours" / (name + "_" + pair_name(i, j) + ".csv"), csv);
          std::string grid = "x,y,density\n";
          for (std::size_t a = 0; a < m.x.size(); ++a)
            for (std::size_t b = 0; b < m.y.size(); ++b)
              grid += format_real(m.x[a]) + "," + format_real(m.y[b]) + "," +
                      format_real(m.density(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) + "\n";
          write_text(out_dir / "contours" / (name + "_" + pair_name(i, j) + "_grid.csv"), grid);
        }
      }
    }
  }

  std::string div = "source,tv,kl\n";
  for (const char* name : {"gaussian", "kde"}) {
    const bool have = std::any_of(sources.begin(), sources.end(), [&](const auto& s) { return s.first == name; }) ||
                      (std::string(name) == "gaussian" && gaussian_summary);
    if (!have) continue;
    std::optional<double> tv, kl;
    if (oracle) {
      try {
        LatticePosterior q;
        if (std::string(name) == "gaussian" && gaussian_summary) {
          const auto mu = (*gaussian_summary).at("mu_post").get<std::vector<double>>();
          const auto sigma = (*gaussian_summary).at("sigma_post").get<std::vector<std::vector<double>>>();
          GaussianDensity g{ParamVec(d), CovMatrix(d, d)};
          for (int r = 0; r < d; ++r) {
            g.mean[r] = mu.at(static_cast<std::size_t>(r));
            for (int c = 0; c < d; ++c) g.cov(r, c) = sigma.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c));
          }
          const GaussianEvaluator eval(g);
          q = evaluate_on_lattice(oracle->lattice, [&](const ParamVec& theta) {
            return std::isfinite(cfg.prior.logpdf(theta)) ? eval(theta) : kNegInf;
          });
        } else {
          const auto it = std::find_if(sources.begin(), sources.end(), [&](const auto& s) { return s.first == name; });
          q = resample_lattice(it->second, oracle->lattice);
        }
        const auto dv = divergence(*oracle, q);
        tv = dv.tv;
        kl = dv.kl;
      } catch (const NumericalError&) {
        tv = 1.0;
        kl = std::numeric_limits<double>::infinity();
      }
    }
    div += std::string(name) + "," + cell(tv) + "," + cell(kl) + "\n";
  }
  write_text(out_dir / "divergence.csv", div);

  std::string lmt = "source,log_marginal\n";
  if (oracle_lm) lmt += "oracle," + format_real(*oracle_lm) + "\n";
  for (const char* name : {"gaussian", "kde"})
    if (lm.contains(name)) lmt += std::string(name) + "," + format_real(lm.at(name).get<double>()) + "\n";
  write_text(out_dir / "log_marginal.csv", lmt);

  std::string modes = "source";
  for (int k = 1; k <= d; ++k) modes += ",theta_" + std::to_string(k);
  modes += "\n";
  for (const auto& [name, lp] : sources) {
    const auto mode = lattice_mode(lp);
    modes += name;
    for (int k = 0; k < d; ++k) modes += "," + format_real(mode[k]);
    modes += "\n";
  }
  write_text(out_dir / "modes.csv", modes);

  if (cfg.true_params && d >= 2) {
    const auto truth = cfg.model.to_inference(*cfg.true_params);
    std::string hpd = "source,pair,inside_95\n";
    for (const auto& [name, lp] : sources)
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
          hpd += name + "," + pair_name(i, j) + "," +
                 (inside_hpd(marginal_2d(lp, i, j), truth[i], truth[j], 0.95) ? "1" : "0") + "\n";
    write_text(out_dir / "hpd_check.csv", hpd);
  }
}

}  // namespace pwabc
