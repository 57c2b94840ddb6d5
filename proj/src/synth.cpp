#include "taegcn/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <sstream>

#include "taegcn/error.hpp"
#include "taegcn/io.hpp"

namespace taegcn::synth {

using nlohmann::json;

std::size_t SynthSpec::steps() const {
  std::size_t t = 0;
  for (const auto& r : regimes) t += r.length;
  return t;
}

void SynthSpec::validate() const {
  if (nodes == 0) throw ConfigError("synth: nodes must be >= 1");
  if (regimes.empty()) throw ConfigError("synth: at least one regime is required");
  if (noise_std < 0) throw ConfigError("synth: noise_std must be >= 0");
  if (!(rho_max > 0)) throw ConfigError("synth: rho_max must be positive");
  for (std::size_t k = 0; k < regimes.size(); ++k) {
    const auto& r = regimes[k];
    if (r.length == 0) throw ConfigError("synth: regime " + std::to_string(k + 1) + " has zero length");
    if (!r.adjacency.defined() || r.adjacency.shape() != ad::Shape{nodes, nodes}) {
      throw ConfigError("synth: regime " + std::to_string(k + 1) + " adjacency must be " +
                        std::to_string(nodes) + "x" + std::to_string(nodes));
    }
    for (double v : r.adjacency.values()) {
      if (!(v >= 0) || !std::isfinite(v)) {
        throw ConfigError("synth: regime " + std::to_string(k + 1) + " adjacency must be non-negative");
      }
    }
  }
}

double spectral_radius(const Tensor& square) {
  const std::size_t n = square.size(0);
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = square.values()[i * n + j];
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Tensor transition_matrix(const Tensor& adjacency, double rho_max) {
  const std::size_t n = adjacency.size(0);
  std::vector<double> a(adjacency.values().begin(), adjacency.values().end());
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += a[i * n + j];
    if (row > 0) {
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= row;
    }
  }
  Tensor out = Tensor::from({n, n}, std::move(a));
  const double rho = spectral_radius(out);
  if (rho > rho_max) {
    const double f = rho_max / rho;
    for (double& v : out.mutable_values()) v *= f;
  }
  return out;
}

SynthResult synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.nodes;
  const std::size_t steps = spec.steps();
  SynthResult result;
  std::size_t start = 0;
  for (const auto& r : spec.regimes) {
    result.adjacency.push_back(r.adjacency.detach());
    result.transition.push_back(transition_matrix(r.adjacency, spec.rho_max));
    result.regime_start.push_back(start);
    start += r.length;
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> values(n * steps);  // [N, T, 1]
  std::vector<double> x(n), next(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = unit(rng);
  std::size_t regime = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) values[i * steps + t] = x[i];
    if (t + 1 == steps) break;
    while (regime + 1 < result.regime_start.size() && t >= result.regime_start[regime + 1]) ++regime;
    const auto a = result.transition[regime].values();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * x[j];
      next[i] = acc;
    }
    for (std::size_t i = 0; i < n; ++i) next[i] += spec.noise_std * noise(rng);
    std::swap(x, next);
  }
  result.dataset = data::SeriesDataset::from_values(Tensor::from({n, steps, 1}, std::move(values)));
  return result;
}

Tensor random_adjacency(std::size_t nodes, std::size_t edges, bool self_loops, std::mt19937_64& rng) {
  if (nodes < 2 && edges > 0) throw ConfigError("synth: random edges need at least 2 nodes");
  if (edges > nodes * (nodes - 1)) {
    throw ConfigError("synth: " + std::to_string(edges) + " edges exceed the " +
                      std::to_string(nodes * (nodes - 1)) + " possible directed pairs");
  }
  std::vector<std::size_t> pairs;
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = 0; j < nodes; ++j) {
      if (i != j) pairs.push_back(i * nodes + j);
    }
  }
  // Partial Fisher-Yates; std::shuffle's draw pattern is unspecified.
  for (std::size_t k = 0; k < edges; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng() % (pairs.size() - k));
    std::swap(pairs[k], pairs[pick]);
  }
  std::vector<double> a(nodes * nodes, 0.0);
  for (std::size_t k = 0; k < edges; ++k) a[pairs[k]] = 1.0;
  if (self_loops) {
    for (std::size_t i = 0; i < nodes; ++i) a[i * nodes + i] = 1.0;
  }
  return Tensor::from({nodes, nodes}, std::move(a));
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("synth spec: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

SynthSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("synth spec: ") + e.what());
  }
  try {
    reject_unknown(j, {"nodes", "noise_std", "seed", "rho_max", "self_loops", "regimes"}, "spec");
    SynthSpec spec;
    spec.nodes = j.at("nodes").get<std::size_t>();
    spec.noise_std = j.value("noise_std", 0.01);
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.rho_max = j.value("rho_max", 0.95);
    const bool self_loops = j.value("self_loops", false);
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t k = 0;
    for (const auto& r : j.at("regimes")) {
      ++k;
      reject_unknown(r, {"length", "adjacency", "edge_list", "edges"}, "regime " + std::to_string(k));
      Regime regime;
      regime.length = r.at("length").get<std::size_t>();
      const std::size_t n = spec.nodes;
      if (r.contains("adjacency")) {
        std::vector<double> a;
        const auto& rows = r.at("adjacency");
        if (rows.size() != n) throw ConfigError("synth spec: regime " + std::to_string(k) + " adjacency needs " + std::to_string(n) + " rows");
        for (const auto& row : rows) {
          if (row.size() != n) throw ConfigError("synth spec: regime " + std::to_string(k) + " adjacency row has wrong length");
          for (const auto& v : row) a.push_back(v.get<double>());
        }
        regime.adjacency = Tensor::from({n, n}, std::move(a));
      } else if (r.contains("edge_list")) {
        std::vector<double> a(n * n, 0.0);
        for (const auto& e : r.at("edge_list")) {
          const auto i = e.at(0).get<std::size_t>();
          const auto jj = e.at(1).get<std::size_t>();
          if (i >= n || jj >= n) throw ConfigError("synth spec: edge index out of range in regime " + std::to_string(k));
          a[i * n + jj] = 1.0;
        }
        if (self_loops) {
          for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
        }
        regime.adjacency = Tensor::from({n, n}, std::move(a));
      } else if (r.contains("edges")) {
        regime.adjacency = random_adjacency(n, r.at("edges").get<std::size_t>(), self_loops, rng);
      } else {
        throw ConfigError("synth spec: regime " + std::to_string(k) + " needs adjacency, edge_list or edges");
      }
      spec.regimes.push_back(std::move(regime));
    }
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
}

std::string adjacency_csv(const Tensor& matrix, const std::vector<std::string>& ids) {
  const std::size_t rows = matrix.size(0);
  const std::size_t cols = matrix.size(1);
  std::ostringstream os;
  os << "node";
  for (std::size_t j = 0; j < cols; ++j) os << ',' << ids[j % ids.size()];
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    os << ids[i % ids.size()];
    for (std::size_t j = 0; j < cols; ++j) os << ',' << io::format_double(matrix.values()[i * cols + j]);
    os << '\n';
  }
  return os.str();
}

void write_outputs(const SynthResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data::write_csv(dir / "data.csv", result.dataset);
  json regimes = json::array();
  for (std::size_t k = 0; k < result.adjacency.size(); ++k) {
    io::write_file_atomic(dir / ("regime_" + std::to_string(k + 1) + "_adjacency.csv"),
                          adjacency_csv(result.adjacency[k], result.dataset.node_ids));
    const std::size_t end =
        k + 1 < result.regime_start.size() ? result.regime_start[k + 1] : result.dataset.steps();
    regimes.push_back({{"regime", k + 1}, {"start", result.regime_start[k]}, {"length", end - result.regime_start[k]}});
  }
  io::write_file_atomic(dir / "regimes.json", json{{"regimes", regimes}}.dump(2) + "\n");
}

}  // namespace taegcn::synth
