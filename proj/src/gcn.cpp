#include "taegcn/gcn.hpp"

#include "taegcn/error.hpp"

namespace taegcn::gcn {

GcnParams GcnParams::create(ad::ParameterStore& store, const std::string& prefix, std::size_t in,
                            std::size_t out, std::uint64_t seed) {
  GcnParams p;
  p.w_g = store.add_uniform(prefix + ".w_g", {in, out}, in, seed);
  p.b_g = store.add(prefix + ".b_g", {out});
  if (in == out) {
    p.w_res = store.add(prefix + ".w_res", {in, out});
    auto v = p.w_res.mutable_values();
    for (std::size_t i = 0; i < in; ++i) v[i * out + i] = 1.0;
  } else {
    p.w_res = store.add_uniform(prefix + ".w_res", {in, out}, in, seed);
  }
  return p;
}

std::size_t GcnParams::parameter_count(std::size_t in, std::size_t out) {
  return 2 * in * out + out;
}

Tensor normalize_adjacency(const Tensor& adjacency) {
  const ad::Shape& s = adjacency.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw DimensionError("normalize_adjacency: expected [...,N,N], got " + ad::to_string(s));
  }
  const std::size_t n = s.back();
  const std::size_t batches = adjacency.numel() / (n * n);
  const auto a = adjacency.values();
  for (double v : a) {
    if (v < 0.0) throw ContractError("normalize_adjacency: negative entry " + std::to_string(v));
  }
  std::vector<double> out(a.size());
  std::vector<double> degree(batches * n);
  for (std::size_t p = 0; p < batches; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = a.data() + (p * n + i) * n;
      double d = 1.0;
      for (std::size_t j = 0; j < n; ++j) d += row[j];
      degree[p * n + i] = d;
      double* dst = out.data() + (p * n + i) * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] = (row[j] + (i == j ? 1.0 : 0.0)) / d;
    }
  }
  // dA_ij = (G_ij - sum_k G_ik An_ik) / d_i
  std::vector<double> y = out;
  return ad::make_result(
      s, std::move(out), {adjacency},
      [y = std::move(y), batches, n, degree = std::move(degree)](std::span<const double> g,
                                                                  std::vector<std::span<double>>& gi) {
        if (gi[0].empty()) return;
        for (std::size_t r = 0; r < batches * n; ++r) {
          const double* gr = g.data() + r * n;
          const double* yr = y.data() + r * n;
          double inner = 0.0;
          for (std::size_t j = 0; j < n; ++j) inner += gr[j] * yr[j];
          double* dst = gi[0].data() + r * n;
          for (std::size_t j = 0; j < n; ++j) dst[j] += (gr[j] - inner) / degree[r];
        }
      });
}

Tensor gcn_forward(const Tensor& xi, const egc::AdjacencySequence& graphs, const GcnParams& params) {
  if (xi.rank() != 4 || xi.size(3) != params.w_g.size(0)) {
    throw DimensionError("gcn_forward: expected [B,N,T," + std::to_string(params.w_g.size(0)) +
                         "], got " + ad::to_string(xi.shape()));
  }
  const std::size_t b = xi.size(0), n = xi.size(1), t = xi.size(2), c = xi.size(3);
  const std::size_t p = graphs.period_length;
  if (graphs.periods.empty() || p == 0 || graphs.periods.size() * p != t) {
    throw ConfigError("gcn_forward: " + std::to_string(graphs.periods.size()) + " periods of length " +
                      std::to_string(p) + " do not tile T=" + std::to_string(t));
  }
  std::vector<Tensor> parts;
  parts.reserve(graphs.periods.size());
  for (std::size_t m = 0; m < graphs.periods.size(); ++m) {
    const Tensor block = ad::reshape(ad::slice(xi, 2, m * p, (m + 1) * p), {b, n, p * c});
    const Tensor mixed = ad::matmul(normalize_adjacency(graphs.periods[m]), block);
    parts.push_back(ad::reshape(mixed, {b, n, p, c}));
  }
  const Tensor propagated = parts.size() == 1 ? parts.front() : ad::concat(parts, 2);
  const Tensor conv = ad::relu(ad::add(ad::matmul(propagated, params.w_g), params.b_g));
  return ad::add(conv, ad::matmul(xi, params.w_res));
}

}  // namespace taegcn::gcn
