#pragma once

// Regime-switching vector autoregression with known adjacency, used as a
// ground-truth oracle for forecasting and graph-recovery experiments.
//
//   x_{t+1} = A_r x_t + eps_t,   eps_t ~ N(0, noise_std^2) i.i.d.
//
// A_r is the row-normalized regime adjacency, rescaled so its spectral radius
// does not exceed rho_max. x_0 ~ U[0,1]^N.

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "taegcn/data.hpp"

namespace taegcn::synth {

using ad::Tensor;

struct Regime {
  Tensor adjacency;  // [N, N], non-negative
  std::size_t length = 0;
};

struct SynthSpec {
  std::size_t nodes = 0;
  std::vector<Regime> regimes;
  double noise_std = 0.01;
  std::uint64_t seed = 0;
  double rho_max = 0.95;

  std::size_t steps() const;
  void validate() const;
};

struct SynthResult {
  data::SeriesDataset dataset;
  /// Adjacencies as given in the SynthSpec, one per regime.
  std::vector<Tensor> adjacency;
  /// Row-normalized, spectrally clipped transition matrices.
  std::vector<Tensor> transition;
  /// First step of each regime.
  std::vector<std::size_t> regime_start;
};

double spectral_radius(const Tensor& square);

/// Row-normalize, then rescale to spectral radius <= rho_max.
Tensor transition_matrix(const Tensor& adjacency, double rho_max);

SynthResult synth_generate(const SynthSpec& spec);

/// `edges` distinct directed off-diagonal edges with unit weight, plus unit
/// self-loops when requested.
Tensor random_adjacency(std::size_t nodes, std::size_t edges, bool self_loops, std::mt19937_64& rng);

/// Parses a JSON synth spec. Regimes give either "adjacency" (matrix),
/// "edge_list" ([[i,j],...]) or "edges" (count of random edges).
SynthSpec spec_from_json(const std::string& text);

/// Writes data.csv, regime_<k>_adjacency.csv (k from 1) and regimes.json.
void write_outputs(const SynthResult& result, const std::filesystem::path& dir);

std::string adjacency_csv(const Tensor& matrix, const std::vector<std::string>& ids);

}  // namespace taegcn::synth
