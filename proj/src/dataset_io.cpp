#include "pwabc/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pwabc/error.hpp"

namespace pwabc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw ConfigError("not a number: '" + text + "'");
  return v;
}

namespace {

std::string format_state_value(double v, bool discrete) {
  if (discrete) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
    return std::string(buf, res.ptr);
  }
  return format_real(v);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string dataset_to_csv(const Dataset& data) {
  std::string out = "time";
  const auto u = data.observations.empty() ? 0 : data.observations.front().state.size();
  for (Eigen::Index k = 0; k < u; ++k) out += ",s" + std::to_string(k + 1);
  out += '\n';
  for (const auto& o : data.observations) {
    out += format_real(o.time);
    for (Eigen::Index k = 0; k < o.state.size(); ++k) out += ',' + format_state_value(o.state[k], data.discrete);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text, bool discrete) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "time") throw ConfigError("dataset CSV header must be time,s1[,s2,...]");
  for (std::size_t k = 1; k < header.size(); ++k)
    if (header[k] != "s" + std::to_string(k)) throw ConfigError("dataset CSV header must be time,s1[,s2,...]");
  const auto u = static_cast<Eigen::Index>(header.size() - 1);
  if (u > StateVec::MaxRowsAtCompileTime) throw ConfigError("state dimension is too large");

  Dataset data;
  data.discrete = discrete;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (static_cast<Eigen::Index>(cells.size()) != u + 1)
      throw ConfigError("dataset CSV row " + std::to_string(row) + " has the wrong number of columns");
    Observation o;
    o.time = parse_real(cells[0]);
    o.state.resize(u);
    for (Eigen::Index k = 0; k < u; ++k) {
      o.state[k] = parse_real(cells[static_cast<std::size_t>(k) + 1]);
      if (discrete && o.state[k] != std::floor(o.state[k]))
        throw ConfigError("dataset CSV row " + std::to_string(row) + " has a non-integer state");
    }
    data.observations.push_back(std::move(o));
  }
  return data;
}

fs::path sidecar_path(const fs::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_dataset(const Dataset& data, const fs::path& csv_path) {
  write_text(csv_path, dataset_to_csv(data));
  json meta;
  meta["model_id"] = data.model_id;
  if (data.theta_true) meta["theta_true"] = std::vector<double>(data.theta_true->begin(), data.theta_true->end());
  if (data.seed) meta["seed"] = *data.seed;
  meta["dt"] = data.dt;
  write_text(sidecar_path(csv_path), meta.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& csv_path) {
  const auto meta_path = sidecar_path(csv_path);
  json meta = json::object();
  if (fs::exists(meta_path)) {
    try {
      meta = json::parse(read_text(meta_path));
    } catch (const json::exception& e) {
      throw ConfigError("bad dataset metadata " + meta_path.string() + ": " + e.what());
    }
  }
  const std::string text = read_text(csv_path);
  bool discrete = false;
  std::string model_id;
  if (meta.contains("model_id")) {
    model_id = meta["model_id"].get<std::string>();
    discrete = parse_model_id(model_id) != ModelId::Cir;
  }
  Dataset data = dataset_from_csv(text, discrete);
  data.model_id = model_id;
  if (meta.contains("theta_true")) {
    const auto v = meta["theta_true"].get<std::vector<double>>();
    data.theta_true = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (meta.contains("seed")) data.seed = meta["seed"].get<std::uint64_t>();
  if (meta.contains("dt")) data.dt = meta["dt"].get<double>();
  return data;
}

}  // namespace pwabc
