#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "taegcn/autodiff.hpp"

namespace taegcn::ad {

/// Named trainable tensors. Iteration is lexicographic by path.
class ParameterStore {
 public:
  /// Registers a zero-initialized parameter. Throws ContractError on a
  /// duplicate path.
  Tensor add(const std::string& path, Shape shape);
  /// Registers a parameter drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  /// The stream depends only on (seed, path), so a parameter's initial value
  /// does not change when unrelated parameters are added or removed.
  Tensor add_uniform(const std::string& path, Shape shape, std::size_t fan_in, std::uint64_t seed);

  const Tensor& get(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t parameter_count() const;

  const std::map<std::string, Tensor>& items() const { return params_; }

  void zero_grad();

  /// Deep copy of all values, keyed by path.
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& values);

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One Adam update with bias correction. L2 is coupled to the gradient
/// (g <- g + weight_decay * theta) before the moment updates. A parameter
/// without an allocated gradient is treated as having zero gradient.
/// Gradients are zeroed afterwards.
void adam_step(ParameterStore& store, AdamState& state);

/// Rescale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace taegcn::ad
