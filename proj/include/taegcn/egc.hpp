#pragma once

// Evolvable graph construction. Node states are seeded from static per-node
// statistics of the training series, evolved period by period with a GRU over
// pooled temporal features, and scored pairwise into a non-negative,
// generally asymmetric adjacency per period:
//
//   A_ij = relu(MLP_e([a_i; a_j])) * sigmoid(MLP_m([a_i; a_j]))

#include <cstdint>
#include <string>
#include <vector>

#include "taegcn/autodiff.hpp"
#include "taegcn/data.hpp"
#include "taegcn/optim.hpp"

namespace taegcn::egc {

using ad::Tensor;

/// Statistics emitted per channel, in this order.
inline constexpr std::size_t kStatsPerChannel = 7;
enum class StaticStat { kMean, kStd, kMin, kMax, kLag1Autocorr, kMissingFraction, kDiffRms };

/// [N, 7*C], channel-major. Computed over non-missing entries; a node/channel
/// with no observations yields zeros with missing fraction 1.
struct StaticFeatures {
  Tensor values;
};

StaticFeatures extract_static_features(const data::SeriesDataset& train);

/// Centres each feature column across nodes and scales it to unit std
/// (columns with std below 1e-8 become 0).
Tensor standardize_columns(const Tensor& features);

struct StateInitParams {
  Tensor w_s;  // [C_s, d_alpha]
  Tensor b_s;  // [d_alpha]

  static StateInitParams create(ad::ParameterStore& store, const std::string& prefix,
                                std::size_t static_dim, std::size_t state_dim, std::uint64_t seed);
};

/// alpha0 = tanh(alpha_s W_s + b_s), [N, d_alpha].
Tensor init_state(const Tensor& static_features, const StateInitParams& params);

struct GruParams {
  Tensor w_r, w_u, w_o;  // [C + d_alpha, d_alpha]
  Tensor b_r, b_u, b_o;  // [d_alpha]

  static GruParams create(ad::ParameterStore& store, const std::string& prefix,
                          std::size_t feature_dim, std::size_t state_dim, std::uint64_t seed);
  static std::size_t parameter_count(std::size_t feature_dim, std::size_t state_dim);
};

/// Two-layer perceptron 2*d -> d -> 1 with a ReLU hidden layer.
struct PairMlp {
  Tensor w1;  // [2*d, d]
  Tensor b1;  // [d]
  Tensor w2;  // [d, 1]
  Tensor b2;  // [1]
};

/// Initial output bias of MLP_e; MLP_m starts at 0.
inline constexpr double kEdgeBiasInit = 1.0;

struct PairScorerParams {
  PairMlp edge;     // MLP_e
  PairMlp message;  // MLP_m

  static PairScorerParams create(ad::ParameterStore& store, const std::string& prefix,
                                 std::size_t state_dim, std::uint64_t seed);
  static std::size_t parameter_count(std::size_t state_dim);
};

/// Mean of xi over the time steps of period `period` (0-based), [B, N, C].
Tensor pool_period(const Tensor& xi, std::size_t period, std::size_t period_length);

/// One GRU update, applied row-wise: gamma [..., N, C], alpha_prev [..., N, d].
Tensor gru_step(const Tensor& gamma, const Tensor& alpha_prev, const GruParams& params);

/// out[..., i, j, :] = left[..., i, :] + right[..., j, :].
Tensor pair_sum(const Tensor& left, const Tensor& right);

/// Raw MLP output for every ordered pair, [..., N, N].
Tensor score_pairs(const Tensor& alpha, const PairMlp& mlp);

/// alpha [..., N, d] -> A [..., N, N].
Tensor build_adjacency(const Tensor& alpha, const PairScorerParams& params);

struct AdjacencySequence {
  std::vector<Tensor> periods;  // each [B, N, N]
  std::size_t period_length = 0;
  /// Node state after each period, each [B, N, d].
  std::vector<Tensor> states;

  std::size_t size() const { return periods.size(); }
};

/// pool -> GRU -> score, iterated over T / P periods.
AdjacencySequence evolve_sequence(const Tensor& xi, const Tensor& alpha0, const GruParams& gru,
                                  const PairScorerParams& scorer, std::size_t period_length);

/// One adjacency from alpha0, reused for every period.
AdjacencySequence static_sequence(const Tensor& alpha0, const PairScorerParams& scorer,
                                  std::size_t batch, std::size_t steps, std::size_t period_length);

}  // namespace taegcn::egc
