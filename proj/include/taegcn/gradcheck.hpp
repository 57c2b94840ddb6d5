#pragma once

// Central finite-difference verification of reverse-mode gradients. The
// numeric side only evaluates forward passes, so it shares nothing with the
// backward closures it checks.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "taegcn/autodiff.hpp"

namespace taegcn::gradcheck {

using ad::Tensor;

inline constexpr double kStep = 1e-6;
/// End-to-end losses have O(1) magnitude but many O(1e-7) partials; at 1e-6
/// the round-off of the difference quotient alone is ~1e-10.
inline constexpr double kModelStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

struct Result {
  std::string name;
  /// max over leaves of max_i |analytic_i - numeric_i| / max(|analytic|_inf, |numeric|_inf, 1e-6).
  double max_rel_error = 0.0;
  std::size_t entries = 0;

  bool passed(double tolerance = kTolerance) const { return max_rel_error < tolerance; }
};

/// `loss` must rebuild the scalar loss from the current leaf values.
Result check(const std::string& name, const std::function<Tensor()>& loss,
             const std::vector<Tensor>& leaves, double step = kStep);

/// Every differentiable primitive, each model block, and the end-to-end
/// masked-MAE loss of a 2-node, T_in=6, 2-layer model (all variants).
std::vector<Result> run_suite(std::uint64_t seed);

}  // namespace taegcn::gradcheck
