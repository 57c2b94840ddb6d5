#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "taegcn/error.hpp"
#include "taegcn/gradcheck.hpp"
#include "taegcn/optim.hpp"

using namespace taegcn;
using ad::Tensor;
using testing::to_vec;

TEST_CASE("matmul identity and hand product") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(to_vec(ad::matmul(a, Tensor::from({2, 2}, {1, 0, 0, 1}))) == std::vector<double>{1, 2, 3, 4});
  CHECK(to_vec(ad::matmul(a, Tensor::from({2, 2}, {5, 6, 7, 8}))) == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul backward uses G times B transpose") {
  Tensor a = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8}, true);
  ad::backward(ad::sum(ad::matmul(a, b)));
  CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) == std::vector<double>{11, 15, 11, 15});
  // dB = A^T G with A = I
  CHECK(std::vector<double>(b.grad().begin(), b.grad().end()) == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("matmul shape errors name both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    ad::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("matmul batch broadcasting") {
  const Tensor a = testing::random_tensor({2, 1, 3, 4}, 1);
  const Tensor b = testing::random_tensor({3, 4, 2}, 2);
  const Tensor c = ad::matmul(a, b);
  CHECK(c.shape() == ad::Shape{2, 3, 3, 2});
  double expect = 0.0;
  for (std::size_t k = 0; k < 4; ++k) expect += a.at({1, 0, 2, k}) * b.at({2, k, 1});
  CHECK(c.at({1, 2, 2, 1}) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("masked softmax closed forms") {
  ad::BoolMatrix mask(3, 3);
  mask.set(0, 0, true);
  mask.set(1, 0, true);
  mask.set(1, 1, true);
  mask.set(2, 1, true);
  mask.set(2, 2, true);
  const Tensor s = Tensor::from({3, 3}, {7, -3, 5, 0.4, 0.4, 9, 100, 0, std::log(2.0)});
  const Tensor p = ad::masked_softmax(s, mask);
  CHECK(p.at({0, 0}) == 1.0);
  CHECK(p.at({0, 1}) == 0.0);
  CHECK(p.at({0, 2}) == 0.0);
  CHECK(p.at({1, 0}) == 0.5);
  CHECK(p.at({1, 1}) == 0.5);
  CHECK(p.at({1, 2}) == 0.0);
  CHECK(p.at({2, 0}) == 0.0);
  CHECK(p.at({2, 1}) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(p.at({2, 2}) == doctest::Approx(2.0 / 3).epsilon(1e-14));
}

TEST_CASE("masked softmax rows sum to one and reject empty rows") {
  ad::BoolMatrix mask(4, 4);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c <= r; ++c) mask.set(r, c, true);
  }
  const Tensor p = ad::masked_softmax(testing::random_tensor({2, 4, 4}, 3, -30, 30), mask);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 4; ++c) sum += p.at({b, r, c});
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
  mask.set(2, 0, false);
  mask.set(2, 1, false);
  mask.set(2, 2, false);
  CHECK_THROWS_AS(ad::masked_softmax(testing::random_tensor({4, 4}, 4), mask), ContractError);
}

TEST_CASE("backward linear, quadratic and accumulation") {
  Tensor x = Tensor::from({3}, {1, -2, 0.5}, true);
  ad::backward(ad::sum(x));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});
  x.zero_grad();
  ad::backward(ad::dot(x, x));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, -4, 1});
  ad::backward(ad::dot(x, x));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{4, -8, 2});
}

TEST_CASE("backward leaves unreachable leaves at zero and rejects non-scalars") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = Tensor::from({2}, {3, 4}, true);
  ad::backward(ad::sum(x));
  for (double g : y.grad()) CHECK(g == 0.0);
  CHECK_THROWS_AS(ad::backward(ad::scale(x, 2.0)), ContractError);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  ad::NoGradGuard guard;
  const Tensor y = ad::tanh(x);
  CHECK(y.is_leaf());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("composite chain matches central differences") {
  Tensor a = testing::random_tensor({3, 4}, 11, -1, 1, true);
  Tensor b = testing::random_tensor({4, 2}, 12, -1, 1, true);
  const auto r = gradcheck::check(
      "chain", [&]() { return ad::sum(ad::tanh(ad::sigmoid(ad::matmul(a, b)))); }, {a, b});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("finite-difference suite over primitives and blocks") {
  for (const auto& r : gradcheck::run_suite(3)) {
    INFO(r.name, " ", r.max_rel_error);
    CHECK(r.passed());
  }
}

TEST_CASE("elementwise ops and reductions") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from({3}, {10, 20, 30});
  CHECK(to_vec(ad::add(a, b)) == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(to_vec(ad::mul(a, b)) == std::vector<double>{10, 40, 90, 40, 100, 180});
  CHECK(to_vec(ad::mean(a, 0)) == std::vector<double>{2.5, 3.5, 4.5});
  CHECK(to_vec(ad::mean(a, 1)) == std::vector<double>{2, 5});
  CHECK(to_vec(ad::slice(a, 1, 1, 3)) == std::vector<double>{2, 3, 5, 6});
  CHECK(to_vec(ad::concat({a, ad::slice(a, 1, 0, 1)}, 1)) == std::vector<double>{1, 2, 3, 1, 4, 5, 6, 4});
  CHECK(to_vec(ad::transpose_last2(a)) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(to_vec(ad::shift(a, 1, 1)) == std::vector<double>{0, 1, 2, 0, 4, 5});
  CHECK(to_vec(ad::relu(Tensor::from({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
  CHECK(ad::sum(a).item() == 21.0);
  CHECK_THROWS_AS(ad::add(a, Tensor::zeros({2})), DimensionError);
  CHECK_THROWS_AS(ad::reshape(a, {4}), DimensionError);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK(Tensor::from({2}, {1, 2}).all_finite());
  CHECK_FALSE(Tensor::from({2}, {1, std::nan("")}).all_finite());
  Tensor x = Tensor::from({2}, {1, 2}, true);
  const Tensor d = x.detach();
  CHECK(d.is_leaf());
  CHECK_FALSE(d.requires_grad());
}

TEST_CASE("operations are deterministic") {
  const Tensor a = testing::random_tensor({3, 5}, 5), b = testing::random_tensor({5, 4}, 6);
  CHECK(to_vec(ad::tanh(ad::matmul(a, b))) == to_vec(ad::tanh(ad::matmul(a, b))));
}

namespace {

ad::ParameterStore one_param(double value) {
  ad::ParameterStore s;
  Tensor t = s.add("theta", {1});
  t.mutable_values()[0] = value;
  return s;
}

}  // namespace

TEST_CASE("adam zero gradient without decay is a fixed point") {
  ad::ParameterStore s = one_param(0.37);
  ad::AdamState st(ad::AdamConfig{1e-4, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) ad::adam_step(s, st);
  CHECK(s.get("theta").item() == 0.37);
  CHECK(st.step == 5);
}

TEST_CASE("adam first step with unit gradient") {
  ad::ParameterStore s = one_param(0.0);
  Tensor t = s.get("theta");
  t.mutable_grad()[0] = 1.0;
  ad::AdamState st(ad::AdamConfig{1e-4, 0.9, 0.999, 1e-8, 0.0});
  ad::adam_step(s, st);
  CHECK(t.item() == doctest::Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(t.grad()[0] == 0.0);
}

TEST_CASE("adam weight decay alone matches a hand-stepped oracle") {
  ad::ParameterStore s = one_param(1.0);
  ad::AdamState st;  // defaults lr = wd = 1e-4
  ad::adam_step(s, st);
  const double g = 1e-4;
  const double m = 0.1 * g, v = 0.001 * g * g;
  const double expect = 1.0 - 1e-4 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
  CHECK(s.get("theta").item() == doctest::Approx(expect).epsilon(1e-15));
  // Second step against an independent recursion.
  ad::adam_step(s, st);
  const double th1 = expect, g2 = 1e-4 * th1;
  const double m2 = 0.9 * m + 0.1 * g2, v2 = 0.999 * v + 0.001 * g2 * g2;
  const double expect2 = th1 - 1e-4 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(s.get("theta").item() == doctest::Approx(expect2).epsilon(1e-15));
}

TEST_CASE("adam defaults") {
  const ad::AdamConfig c;
  CHECK(c.lr == 1e-4);
  CHECK(c.beta1 == 0.9);
  CHECK(c.beta2 == 0.999);
  CHECK(c.eps == 1e-8);
  CHECK(c.weight_decay == 1e-4);
  const ad::AdamState st;
  CHECK(st.step == 0);
  CHECK(st.m.empty());
}

TEST_CASE("parameter store ordering, duplicates and init") {
  ad::ParameterStore s;
  s.add_uniform("b.w", {4, 4}, 4, 9);
  s.add("a.b", {4});
  CHECK_THROWS_AS(s.add("a.b", {2}), ContractError);
  std::vector<std::string> names;
  for (const auto& [n, _] : s.items()) names.push_back(n);
  CHECK(names == std::vector<std::string>{"a.b", "b.w"});
  for (double v : s.get("b.w").values()) CHECK(std::fabs(v) <= 0.5);
  CHECK(s.parameter_count() == 20);
  ad::ParameterStore other;
  other.add("z", {1});
  other.add_uniform("b.w", {4, 4}, 4, 9);
  CHECK(testing::to_vec(other.get("b.w")) == testing::to_vec(s.get("b.w")));
}

TEST_CASE("gradient clipping rescales the joint norm") {
  ad::ParameterStore s;
  Tensor a = s.add("a", {2});
  a.mutable_grad()[0] = 3;
  a.mutable_grad()[1] = 4;
  CHECK(ad::clip_grad_norm(s, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));
}
