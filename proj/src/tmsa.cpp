#include "taegcn/tmsa.hpp"

#include <cmath>

#include "taegcn/error.hpp"

namespace taegcn::tmsa {

WindowMask build_causal_window_mask(std::size_t length, std::size_t window) {
  if (length == 0 || window == 0) {
    throw ContractError("causal window mask needs length >= 1 and window >= 1");
  }
  WindowMask mask{length, window, ad::BoolMatrix(length, length)};
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
    for (std::size_t s = first; s <= t; ++s) mask.allowed.set(t, s, true);
  }
  return mask;
}

TmsaLayerParams TmsaLayerParams::create(ad::ParameterStore& store, const std::string& prefix,
                                        std::size_t channels, std::size_t heads,
                                        std::vector<std::size_t> head_windows,
                                        std::uint64_t seed) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("tmsa: channels (" + std::to_string(channels) +
                      ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (head_windows.size() != heads) {
    throw ConfigError("tmsa: expected " + std::to_string(heads) + " head windows, got " +
                      std::to_string(head_windows.size()));
  }
  for (std::size_t w : head_windows) {
    if (w == 0) throw ConfigError("tmsa: window sizes must be >= 1");
  }
  TmsaLayerParams p;
  p.channels = channels;
  p.heads = heads;
  p.head_dim = channels / heads;
  p.head_windows = std::move(head_windows);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    p.w_q.push_back(store.add_uniform(hp + ".w_q", {channels, p.head_dim}, channels, seed));
    p.w_k.push_back(store.add_uniform(hp + ".w_k", {channels, p.head_dim}, channels, seed));
    p.w_v.push_back(store.add_uniform(hp + ".w_v", {channels, p.head_dim}, channels, seed));
  }
  p.w_o = store.add_uniform(prefix + ".w_o", {heads * p.head_dim, channels}, heads * p.head_dim, seed);
  p.w_fc = store.add_uniform(prefix + ".w_fc", {channels, channels}, channels, seed);
  p.b_fc = store.add(prefix + ".b_fc", {channels});
  return p;
}

std::size_t TmsaLayerParams::parameter_count(std::size_t channels, std::size_t heads) {
  const std::size_t d = channels / heads;
  return heads * 3 * channels * d + heads * d * channels + channels * channels + channels;
}

namespace {

void check_input(const Tensor& z, const TmsaLayerParams& p) {
  if (z.rank() != 4 || z.size(3) != p.channels) {
    throw DimensionError("tmsa_forward: expected [B,N,T," + std::to_string(p.channels) +
                         "], got " + ad::to_string(z.shape()));
  }
}

Tensor head_probs(const Tensor& z, const TmsaLayerParams& p, std::size_t h, Tensor* values) {
  const std::size_t length = z.size(2);
  const Tensor q = ad::matmul(z, p.w_q[h]);
  const Tensor k = ad::matmul(z, p.w_k[h]);
  *values = ad::matmul(z, p.w_v[h]);
  const Tensor scores =
      ad::scale(ad::matmul(q, ad::transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(p.head_dim)));
  const WindowMask mask = build_causal_window_mask(length, p.head_windows[h]);
  return ad::masked_softmax(scores, mask.allowed);
}

}  // namespace

Tensor tmsa_forward(const Tensor& z, const TmsaLayerParams& p) {
  check_input(z, p);
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor v;
    const Tensor probs = head_probs(z, p, h, &v);
    heads.push_back(ad::matmul(probs, v));
  }
  const Tensor merged = p.heads == 1 ? heads.front() : ad::concat(heads, 3);
  const Tensor mixed = ad::matmul(merged, p.w_o);
  return ad::relu(ad::add(ad::matmul(mixed, p.w_fc), p.b_fc));
}

Tensor attention_weights(const Tensor& z, const TmsaLayerParams& p, std::size_t head) {
  check_input(z, p);
  if (head >= p.heads) throw ContractError("attention_weights: head index out of range");
  Tensor v;
  return head_probs(z, p, head, &v);
}

}  // namespace taegcn::tmsa
