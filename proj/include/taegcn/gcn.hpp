#pragma once

#include <cstdint>
#include <string>

#include "taegcn/autodiff.hpp"
#include "taegcn/egc.hpp"
#include "taegcn/optim.hpp"

namespace taegcn::gcn {

using ad::Tensor;

struct GcnParams {
  Tensor w_g;    // [C, C_out]
  Tensor b_g;    // [C_out]
  Tensor w_res;  // [C, C_out]; starts as identity when C == C_out

  static GcnParams create(ad::ParameterStore& store, const std::string& prefix, std::size_t in,
                          std::size_t out, std::uint64_t seed);
  static std::size_t parameter_count(std::size_t in, std::size_t out);
};

/// D^-1 (A + I) with D the row sums of A + I. A: [..., N, N], non-negative.
Tensor normalize_adjacency(const Tensor& adjacency);

/// For step t in period m: Z_t = relu(norm(A_m) xi_t W_g + b_g) + xi_t W_res.
/// xi: [B, N, T, C] -> [B, N, T, C_out].
Tensor gcn_forward(const Tensor& xi, const egc::AdjacencySequence& graphs, const GcnParams& params);

}  // namespace taegcn::gcn
