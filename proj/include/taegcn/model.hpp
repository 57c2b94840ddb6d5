#pragma once

// End-to-end forecaster: input projection, L spatio-temporal layers
// (temporal block -> graph construction -> graph convolution), per-layer skip
// projections summed at the final time step, and a two-layer output head.

#include <cstdint>
#include <string>
#include <vector>

#include "taegcn/autodiff.hpp"
#include "taegcn/data.hpp"
#include "taegcn/egc.hpp"
#include "taegcn/gcn.hpp"
#include "taegcn/optim.hpp"
#include "taegcn/tmsa.hpp"

namespace taegcn::model {

using ad::Tensor;

enum class WindowMode { kPerLayer, kPerHead };

enum class Variant { kFull, kAblateTmsa, kAblateEgc };

std::string to_string(Variant v);
/// Accepts "full", "ablate_tmsa"/"tmsa", "ablate_egc"/"egc".
Variant parse_variant(const std::string& name);
std::string to_string(WindowMode m);
WindowMode parse_window_mode(const std::string& name);

struct ModelConfig {
  std::size_t layers = 4;
  std::vector<std::size_t> windows{1, 3, 6, 12};
  WindowMode window_mode = WindowMode::kPerLayer;
  std::size_t heads = 4;
  std::size_t hidden = 32;
  std::size_t state_dim = 16;
  std::size_t period = 3;
  std::size_t input_length = 12;
  std::size_t horizon = 3;
  std::size_t skip = 64;
  std::size_t head_hidden = 256;
  std::size_t target_channel = 0;
  std::size_t input_channels = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  /// Window of head h in layer l.
  std::size_t window(std::size_t layer, std::size_t head) const;
  bool operator==(const ModelConfig&) const = default;
};

/// Dilated causal convolution standing in for the attention block:
/// out_t = relu(x_t W_now + x_{t-d} W_past + b), with x_{t-d} = 0 for t < d.
struct TcnParams {
  Tensor w_now, w_past, b;
  std::size_t dilation = 1;
};

Tensor tcn_forward(const Tensor& z, const TcnParams& params);

class TaegcnModel {
 public:
  explicit TaegcnModel(ModelConfig config, Variant variant = Variant::kFull);
  TaegcnModel(const TaegcnModel&) = delete;
  TaegcnModel& operator=(const TaegcnModel&) = delete;
  TaegcnModel(TaegcnModel&&) = default;
  TaegcnModel& operator=(TaegcnModel&&) = default;

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return variant_; }
  ad::ParameterStore& parameters() { return store_; }
  const ad::ParameterStore& parameters() const { return store_; }

  struct Output {
    Tensor prediction;                           // [B, N, horizon], normalized units
    std::vector<egc::AdjacencySequence> graphs;  // one per layer
    Tensor initial_state;                        // [N, d_alpha]
  };

  /// x: [B, N, T_in, C_in]; static_features: [N, 7*C_in].
  Output forward_detailed(const Tensor& x, const Tensor& static_features) const;
  Tensor forward(const Tensor& x, const Tensor& static_features) const;

  /// Parameter count from config arithmetic alone.
  static std::size_t expected_parameter_count(const ModelConfig& config, Variant variant);

 private:
  struct Layer {
    tmsa::TmsaLayerParams attention;
    TcnParams tcn;
    egc::GruParams gru;
    egc::PairScorerParams scorer;
    gcn::GcnParams gcn;
    Tensor w_skip, b_skip;
  };

  ModelConfig config_;
  Variant variant_;
  ad::ParameterStore store_;
  Tensor w_in_, b_in_;
  egc::StateInitParams state_init_;
  std::vector<Layer> layers_;
  Tensor w_h1_, b_h1_, w_h2_, b_h2_;
};

inline TaegcnModel build_ablation(Variant variant, const ModelConfig& config) {
  return TaegcnModel(config, variant);
}

struct MaskedLoss {
  Tensor loss;
  std::size_t count = 0;
  /// Every target equalled the missing marker; loss is 0.
  bool all_masked = false;
};

/// Mean |prediction - target| over entries whose target differs from the
/// marker. Both tensors share a shape and are in original units.
MaskedLoss masked_mae_loss(const Tensor& prediction, const Tensor& target, double missing_marker);

/// A model bundled with the training-derived state it needs at inference.
struct Forecaster {
  TaegcnModel model;
  data::NormStats norm;
  Tensor static_features;  // [N, 7*C]
  std::vector<std::string> node_ids;
  double missing_marker = 0.0;

  /// Fits normalization and static features on `train` only.
  static Forecaster from_training_data(const ModelConfig& config, Variant variant,
                                       const data::SeriesDataset& train);

  /// Forward pass with predictions mapped back to original units.
  Tensor predict(const Tensor& x) const;
  Tensor denormalize_target(const Tensor& normalized) const;
};

}  // namespace taegcn::model
