#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "taegcn/error.hpp"
#include "taegcn/tmsa.hpp"

using namespace taegcn;
using ad::Tensor;

namespace {

std::vector<std::vector<std::size_t>> rows_of(const tmsa::WindowMask& m) {
  std::vector<std::vector<std::size_t>> out(m.length);
  for (std::size_t t = 0; t < m.length; ++t) {
    for (std::size_t s = 0; s < m.length; ++s) {
      if (m.allowed(t, s)) out[t].push_back(s);
    }
  }
  return out;
}

tmsa::TmsaLayerParams layer(ad::ParameterStore& store, std::size_t c, std::size_t h,
                            std::vector<std::size_t> windows, std::uint64_t seed = 1) {
  auto p = tmsa::TmsaLayerParams::create(store, "t", c, h, std::move(windows), seed);
  Tensor b = p.b_fc;
  for (double& v : b.mutable_values()) v = 0.5;
  return p;
}

}  // namespace

TEST_CASE("window masks") {
  using Rows = std::vector<std::vector<std::size_t>>;
  CHECK(rows_of(tmsa::build_causal_window_mask(3, 1)) == Rows{{0}, {1}, {2}});
  CHECK(rows_of(tmsa::build_causal_window_mask(3, 3)) == Rows{{0}, {0, 1}, {0, 1, 2}});
  CHECK(rows_of(tmsa::build_causal_window_mask(4, 2)) == Rows{{0}, {0, 1}, {1, 2}, {2, 3}});
  CHECK(rows_of(tmsa::build_causal_window_mask(3, 10)) == Rows{{0}, {0, 1}, {0, 1, 2}});
  for (std::size_t w = 1; w <= 6; ++w) {
    const auto rows = rows_of(tmsa::build_causal_window_mask(8, w));
    for (std::size_t t = 0; t < 8; ++t) CHECK(rows[t].size() == std::min(w, t + 1));
  }
}

TEST_CASE("tmsa rejects inconsistent configurations") {
  ad::ParameterStore s;
  CHECK_THROWS_AS(tmsa::TmsaLayerParams::create(s, "a", 6, 4, {1, 1, 1, 1}, 0), ConfigError);
  CHECK_THROWS_AS(tmsa::TmsaLayerParams::create(s, "b", 8, 4, {1, 1}, 0), ConfigError);
  CHECK_THROWS_AS(tmsa::TmsaLayerParams::create(s, "c", 8, 4, {1, 0, 1, 1}, 0), ConfigError);
}

TEST_CASE("tmsa preserves shape") {
  ad::ParameterStore s;
  const auto p = layer(s, 8, 2, {3, 3});
  for (std::size_t t : {1, 5, 12}) {
    const Tensor z = testing::random_tensor({2, 3, t, 8}, t);
    CHECK(tmsa::tmsa_forward(z, p).shape() == ad::Shape{2, 3, t, 8});
  }
}

TEST_CASE("window one equals a per-step dense computation") {
  ad::ParameterStore s;
  const std::size_t c = 4, h = 2, dh = 2, t = 5;
  const auto p = layer(s, c, h, {1, 1});
  const Tensor z = testing::random_tensor({1, 2, t, c}, 3);
  const Tensor out = tmsa::tmsa_forward(z, p);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t step = 0; step < t; ++step) {
      std::vector<double> cat(h * dh, 0.0);
      for (std::size_t head = 0; head < h; ++head) {
        for (std::size_t j = 0; j < dh; ++j) {
          for (std::size_t k = 0; k < c; ++k) cat[head * dh + j] += z.at({0, n, step, k}) * p.w_v[head].at({k, j});
        }
      }
      std::vector<double> mixed(c, 0.0);
      for (std::size_t o = 0; o < c; ++o) {
        for (std::size_t k = 0; k < h * dh; ++k) mixed[o] += cat[k] * p.w_o.at({k, o});
      }
      for (std::size_t o = 0; o < c; ++o) {
        double fc = p.b_fc.at({o});
        for (std::size_t k = 0; k < c; ++k) fc += mixed[k] * p.w_fc.at({k, o});
        CHECK(std::fabs(out.at({0, n, step, o}) - std::max(0.0, fc)) < 1e-12);
      }
    }
  }
}

TEST_CASE("tmsa causality, locality and node independence") {
  const std::size_t t = 9, c = 4;
  for (std::size_t w : {1, 2, 3}) {
    ad::ParameterStore s;
    const auto p = layer(s, c, 2, {w, w}, 10 + w);
    const Tensor z = testing::random_tensor({1, 3, t, c}, 20 + w);
    const Tensor base = tmsa::tmsa_forward(z, p);
    for (std::size_t cut = 0; cut < t; ++cut) {
      // Future perturbation.
      Tensor fut = z.detach();
      auto fv = fut.mutable_values();
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t s2 = cut + 1; s2 < t; ++s2) {
          for (std::size_t k = 0; k < c; ++k) fv[(n * t + s2) * c + k] += 3.0;
        }
      }
      const Tensor a = tmsa::tmsa_forward(fut, p);
      // Distant past perturbation.
      Tensor past = z.detach();
      auto pv = past.mutable_values();
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t s2 = 0; s2 + w <= cut; ++s2) {
          for (std::size_t k = 0; k < c; ++k) pv[(n * t + s2) * c + k] -= 2.0;
        }
      }
      const Tensor b = tmsa::tmsa_forward(past, p);
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t k = 0; k < c; ++k) {
          for (std::size_t s2 = 0; s2 <= cut; ++s2) CHECK(std::fabs(a.at({0, n, s2, k}) - base.at({0, n, s2, k})) < 1e-12);
          CHECK(std::fabs(b.at({0, n, cut, k}) - base.at({0, n, cut, k})) < 1e-12);
        }
      }
    }
    Tensor other = z.detach();
    auto ov = other.mutable_values();
    for (std::size_t i = t * c; i < ov.size(); ++i) ov[i] += 1.0;  // nodes 1 and 2
    const Tensor o = tmsa::tmsa_forward(other, p);
    for (std::size_t i = 0; i < t * c; ++i) CHECK(o.values()[i] == base.values()[i]);
  }
}

TEST_CASE("attention weights respect the mask") {
  ad::ParameterStore s;
  const auto p = layer(s, 4, 2, {2, 4});
  const Tensor z = testing::random_tensor({1, 1, 6, 4}, 8);
  for (std::size_t head = 0; head < 2; ++head) {
    const Tensor a = tmsa::attention_weights(z, p, head);
    const std::size_t w = p.head_windows[head];
    for (std::size_t t = 0; t < 6; ++t) {
      double sum = 0.0;
      for (std::size_t s2 = 0; s2 < 6; ++s2) {
        const double v = a.at({0, 0, t, s2});
        if (!(s2 <= t && s2 + w > t)) CHECK(v == 0.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("tmsa parameter count") {
  ad::ParameterStore s;
  tmsa::TmsaLayerParams::create(s, "t", 32, 4, {3, 3, 3, 3}, 0);
  CHECK(s.parameter_count() == tmsa::TmsaLayerParams::parameter_count(32, 4));
  CHECK(tmsa::TmsaLayerParams::parameter_count(32, 4) == 3 * 32 * 32 + 32 * 32 + 32 * 32 + 32);
}
