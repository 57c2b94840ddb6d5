#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "taegcn/error.hpp"
#include "taegcn/gcn.hpp"

using namespace taegcn;
using ad::Tensor;

namespace {

egc::AdjacencySequence seq(std::vector<Tensor> periods, std::size_t p) {
  egc::AdjacencySequence s;
  s.periods = std::move(periods);
  s.period_length = p;
  return s;
}

void fill(Tensor t, double v) {
  for (double& x : t.mutable_values()) x = v;
}

void eye(Tensor t) {
  fill(t, 0.0);
  const std::size_t n = t.size(0);
  for (std::size_t i = 0; i < n; ++i) t.mutable_values()[i * n + i] = 1.0;
}

}  // namespace

TEST_CASE("normalize adjacency") {
  CHECK(testing::to_vec(gcn::normalize_adjacency(Tensor::zeros({3, 3}))) ==
        std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(testing::to_vec(gcn::normalize_adjacency(Tensor::from({2, 2}, {0, 1, 3, 0}))) ==
        std::vector<double>{0.5, 0.5, 0.75, 0.25});
  const Tensor r = gcn::normalize_adjacency(testing::random_tensor({2, 5, 5}, 1, 0.0, 4.0));
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += r.at({b, i, j});
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(gcn::normalize_adjacency(Tensor::from({2, 2}, {0, -1, 0, 0})), ContractError);
  CHECK_THROWS_AS(gcn::normalize_adjacency(Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("gcn identity propagation and pure residual") {
  ad::ParameterStore s;
  auto p = gcn::GcnParams::create(s, "g", 3, 3, 1);
  eye(p.w_g);
  fill(p.w_res, 0.0);
  const Tensor xi = testing::random_tensor({1, 2, 4, 3}, 2, 0.0, 1.0);
  const auto graphs = seq({Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 2, 2})}, 2);
  CHECK(testing::max_abs_diff(gcn::gcn_forward(xi, graphs, p), xi) == 0.0);

  ad::ParameterStore s2;
  auto q = gcn::GcnParams::create(s2, "g", 3, 3, 1);
  fill(q.w_g, 0.0);
  const Tensor signed_xi = testing::random_tensor({1, 2, 4, 3}, 3);
  const auto random_graphs = seq({testing::random_tensor({1, 2, 2}, 4, 0, 1), testing::random_tensor({1, 2, 2}, 5, 0, 1)}, 2);
  const Tensor z = gcn::gcn_forward(signed_xi, random_graphs, q);
  CHECK(testing::max_abs_diff(z, ad::matmul(signed_xi, q.w_res)) == 0.0);
  // Residual starts as the identity when shapes agree.
  CHECK(testing::max_abs_diff(z, signed_xi) == 0.0);
}

TEST_CASE("gcn matches hand-unrolled products") {
  ad::ParameterStore s;
  auto p = gcn::GcnParams::create(s, "g", 2, 2, 1);
  const Tensor wg = Tensor::from({2, 2}, {0.5, -1.0, 2.0, 0.25});
  const Tensor wres = Tensor::from({2, 2}, {0.1, 0.2, -0.3, 0.4});
  std::copy(wg.values().begin(), wg.values().end(), p.w_g.mutable_values().begin());
  std::copy(wres.values().begin(), wres.values().end(), p.w_res.mutable_values().begin());
  p.b_g.mutable_values()[0] = 0.1;
  p.b_g.mutable_values()[1] = -0.2;
  // xi[node][step][channel]
  const double x[2][2][2] = {{{1, 2}, {-1, 0.5}}, {{0.3, -0.7}, {2, 1}}};
  std::vector<double> flat;
  for (auto& n : x) {
    for (auto& t : n) flat.insert(flat.end(), {t[0], t[1]});
  }
  const Tensor xi = Tensor::from({1, 2, 2, 2}, flat);
  const Tensor a1 = Tensor::from({1, 2, 2}, {0, 1, 3, 0});
  const Tensor a2 = Tensor::from({1, 2, 2}, {1, 0, 0, 0});
  const Tensor z = gcn::gcn_forward(xi, seq({a1, a2}, 1), p);
  const double an[2][2][2] = {{{0.5, 0.5}, {0.75, 0.25}}, {{1, 0}, {0, 1}}};
  const double b[2] = {0.1, -0.2};
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      double mixed[2] = {0, 0};
      for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t k = 0; k < 2; ++k) mixed[k] += an[t][i][j] * x[j][t][k];
      }
      for (std::size_t o = 0; o < 2; ++o) {
        double conv = b[o], res = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
          conv += mixed[k] * wg.at({k, o});
          res += x[i][t][k] * wres.at({k, o});
        }
        CHECK(std::fabs(z.at({0, i, t, o}) - (std::max(0.0, conv) + res)) < 1e-14);
      }
    }
  }
}

TEST_CASE("gcn locality and one-hop influence") {
  ad::ParameterStore s;
  auto p = gcn::GcnParams::create(s, "g", 3, 3, 4);
  fill(p.b_g, 0.3);
  const Tensor xi = testing::random_tensor({1, 3, 2, 3}, 6);
  // Node 0 receives from node 1 only; node 2 is isolated.
  const Tensor a = Tensor::from({1, 3, 3}, {0, 1, 0, 0, 0, 0, 0, 0, 0});
  const auto g = seq({a}, 2);
  const Tensor base = gcn::gcn_forward(xi, g, p);
  Tensor moved = xi.detach();
  for (std::size_t i = 6; i < 12; ++i) moved.mutable_values()[i] += 1.0;  // node 1
  const Tensor z = gcn::gcn_forward(moved, g, p);
  bool node0_changed = false;
  for (std::size_t i = 0; i < 6; ++i) node0_changed = node0_changed || z.values()[i] != base.values()[i];
  CHECK(node0_changed);
  for (std::size_t i = 12; i < 18; ++i) CHECK(z.values()[i] == base.values()[i]);
}

TEST_CASE("gcn rejects mismatched tiling") {
  ad::ParameterStore s;
  auto p = gcn::GcnParams::create(s, "g", 2, 2, 1);
  const Tensor xi = Tensor::zeros({1, 2, 6, 2});
  CHECK_THROWS_AS(gcn::gcn_forward(xi, seq({Tensor::zeros({1, 2, 2})}, 3), p), ConfigError);
  CHECK(gcn::gcn_forward(xi, seq({Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 2, 2})}, 3), p).shape() ==
        ad::Shape{1, 2, 6, 2});
  CHECK(s.parameter_count() == gcn::GcnParams::parameter_count(2, 2));
}
