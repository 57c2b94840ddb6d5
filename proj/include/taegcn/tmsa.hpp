#pragma once

// Temporal multi-head self-attention: per-node causal attention over the
// time axis restricted to a local window, followed by a channel mixer and a
// per-step fully connected layer. Output length equals input length.

#include <cstdint>
#include <string>
#include <vector>

#include "taegcn/autodiff.hpp"
#include "taegcn/optim.hpp"

namespace taegcn::tmsa {

using ad::Tensor;

/// allowed(t, s) <=> t - window < s <= t (0-indexed).
struct WindowMask {
  std::size_t length = 0;
  std::size_t window = 0;
  ad::BoolMatrix allowed;
};

WindowMask build_causal_window_mask(std::size_t length, std::size_t window);

struct TmsaLayerParams {
  std::size_t channels = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  /// Window per head. Per-layer schedules repeat the same value.
  std::vector<std::size_t> head_windows;
  std::vector<Tensor> w_q, w_k, w_v;  // each [C, head_dim]
  Tensor w_o;                         // [heads * head_dim, C]
  Tensor w_fc;                        // [C, C]
  Tensor b_fc;                        // [C]

  /// Registers parameters under `prefix` (e.g. "layer0.tmsa").
  static TmsaLayerParams create(ad::ParameterStore& store, const std::string& prefix,
                                std::size_t channels, std::size_t heads,
                                std::vector<std::size_t> head_windows, std::uint64_t seed);

  static std::size_t parameter_count(std::size_t channels, std::size_t heads);
};

/// z: [B, N, T, C] -> [B, N, T, C].
Tensor tmsa_forward(const Tensor& z, const TmsaLayerParams& params);

/// Attention probabilities of one head, [B, N, T, T]. Diagnostic use.
Tensor attention_weights(const Tensor& z, const TmsaLayerParams& params, std::size_t head);

}  // namespace taegcn::tmsa
