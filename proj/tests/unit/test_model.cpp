#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "taegcn/error.hpp"
#include "taegcn/model.hpp"

using namespace taegcn;
using ad::Tensor;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.layers = 2;
  c.windows = {1, 3};
  c.heads = 2;
  c.hidden = 8;
  c.state_dim = 4;
  c.period = 3;
  c.input_length = 6;
  c.horizon = 3;
  c.skip = 8;
  c.head_hidden = 16;
  c.input_channels = 2;
  c.seed = 5;
  return c;
}

const model::Variant kVariants[] = {model::Variant::kFull, model::Variant::kAblateTmsa, model::Variant::kAblateEgc};

Tensor permute_nodes(const Tensor& x, const std::vector<std::size_t>& perm, std::size_t node_axis) {
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < node_axis; ++a) outer *= s[a];
  for (std::size_t a = node_axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t n = s[node_axis];
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < inner; ++i) out[(o * n + k) * inner + i] = x.values()[(o * n + perm[k]) * inner + i];
    }
  }
  return Tensor::from(s, std::move(out));
}

}  // namespace

TEST_CASE("config validation") {
  model::ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.layers == 4);
  CHECK(c.windows == std::vector<std::size_t>{1, 3, 6, 12});
  CHECK(c.heads == 4);
  CHECK(c.hidden == 32);
  CHECK(c.state_dim == 16);
  CHECK(c.period == 3);
  CHECK(c.input_length == 12);
  CHECK(c.skip == 64);
  CHECK(c.head_hidden == 256);
  auto bad = c;
  bad.windows = {1, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.hidden = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.period = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.horizon = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.window_mode = model::WindowMode::kPerHead;
  CHECK_NOTHROW(bad.validate());
  CHECK(bad.window(2, 3) == 12);
  CHECK(c.window(2, 3) == 6);
  CHECK_THROWS_AS(model::parse_variant("bogus"), ConfigError);
  CHECK(model::parse_variant("egc") == model::Variant::kAblateEgc);
  CHECK(model::parse_variant("ablate_tmsa") == model::Variant::kAblateTmsa);
}

TEST_CASE("forward shape for every variant and horizon") {
  for (auto v : kVariants) {
    for (std::size_t h : {3, 6, 12}) {
      auto c = small_config();
      c.horizon = h;
      const model::TaegcnModel m(c, v);
      const Tensor y = m.forward(testing::random_tensor({3, 4, 6, 2}, 1), testing::random_tensor({4, 14}, 2));
      CHECK(y.shape() == ad::Shape{3, 4, h});
      CHECK(y.all_finite());
    }
  }
}

TEST_CASE("forward rejects bad shapes") {
  const model::TaegcnModel m(small_config());
  CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 4, 5, 2}), Tensor::zeros({4, 14})), DimensionError);
  CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 4, 6, 2}), Tensor::zeros({3, 14})), DimensionError);
}

TEST_CASE("parameter counts follow the shape formulas") {
  for (auto v : kVariants) {
    for (const auto& c : {small_config(), model::ModelConfig{}}) {
      const model::TaegcnModel m(c, v);
      CHECK(m.parameters().parameter_count() == model::TaegcnModel::expected_parameter_count(c, v));
    }
  }
  const auto c = model::ModelConfig{};
  const std::size_t full = model::TaegcnModel::expected_parameter_count(c, model::Variant::kFull);
  const std::size_t no_egc = model::TaegcnModel::expected_parameter_count(c, model::Variant::kAblateEgc);
  const std::size_t no_tmsa = model::TaegcnModel::expected_parameter_count(c, model::Variant::kAblateTmsa);
  CHECK(full - no_egc == c.layers * egc::GruParams::parameter_count(c.hidden, c.state_dim));
  const std::size_t attn = tmsa::TmsaLayerParams::parameter_count(c.hidden, c.heads);
  const std::size_t tcn = 2 * c.hidden * c.hidden + c.hidden;
  CHECK(full - no_tmsa == c.layers * (attn - tcn));
}

TEST_CASE("ablate egc uses one graph for every period") {
  const model::TaegcnModel m(small_config(), model::Variant::kAblateEgc);
  const auto o = m.forward_detailed(testing::random_tensor({2, 3, 6, 2}, 1), testing::random_tensor({3, 14}, 2));
  for (const auto& layer : o.graphs) {
    REQUIRE(layer.size() == 2);
    CHECK(testing::to_vec(layer.periods[0]) == testing::to_vec(layer.periods[1]));
  }
  const model::TaegcnModel full(small_config());
  const auto f = full.forward_detailed(testing::random_tensor({2, 3, 6, 2}, 1), testing::random_tensor({3, 14}, 2));
  CHECK(testing::to_vec(f.graphs[0].periods[0]) != testing::to_vec(f.graphs[0].periods[1]));
}

TEST_CASE("node relabeling equivariance") {
  const std::vector<std::size_t> perm{3, 1, 0, 2};
  for (auto v : kVariants) {
    const model::TaegcnModel m(small_config(), v);
    const Tensor x = testing::random_tensor({2, 4, 6, 2}, 7);
    const Tensor s = testing::random_tensor({4, 14}, 8);
    const Tensor y = m.forward(x, s);
    const Tensor yp = m.forward(permute_nodes(x, perm, 1), permute_nodes(s, perm, 0));
    CHECK(testing::max_abs_diff(yp, permute_nodes(y, perm, 1)) < 1e-12);
  }
}

TEST_CASE("forward is deterministic and seed dependent") {
  const Tensor x = testing::random_tensor({1, 3, 6, 2}, 1), s = testing::random_tensor({3, 14}, 2);
  const model::TaegcnModel a(small_config()), b(small_config());
  CHECK(testing::to_vec(a.forward(x, s)) == testing::to_vec(b.forward(x, s)));
  auto c = small_config();
  c.seed = 6;
  CHECK(testing::to_vec(model::TaegcnModel(c).forward(x, s)) != testing::to_vec(a.forward(x, s)));
}

TEST_CASE("forecasts ignore data after the forecast origin") {
  const Tensor v = testing::random_tensor({3, 40, 2}, 4, 1, 5);
  const auto ds = data::SeriesDataset::from_values(v);
  const auto train = ds.slice_steps(0, 28);
  for (auto variant : kVariants) {
    const auto f = model::Forecaster::from_training_data(small_config(), variant, train);
    const data::WindowSet w(ds, f.norm, 6, 3, 0);
    Tensor later = v.detach();
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t t = 30; t < 40; ++t) later.mutable_values()[(n * 40 + t) * 2 + 1] += 7.0;
    }
    const data::WindowSet w2(data::SeriesDataset::from_values(later), f.norm, 6, 3, 0);
    // Windows whose inputs end at step 29 or earlier.
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k + 6 <= 30; ++k) idx.push_back(k);
    CHECK(testing::to_vec(f.predict(w.inputs(idx))) == testing::to_vec(f.predict(w2.inputs(idx))));
    CHECK(testing::to_vec(f.predict(w.inputs({25}))) != testing::to_vec(f.predict(w2.inputs({25}))));
  }
}

TEST_CASE("every parameter receives gradient") {
  for (auto v : kVariants) {
    model::TaegcnModel m(small_config(), v);
    const auto loss = model::masked_mae_loss(
        m.forward(testing::random_tensor({2, 3, 6, 2}, 1), testing::random_tensor({3, 14}, 2)),
        testing::random_tensor({2, 3, 3}, 3, 1, 2), 0.0);
    ad::backward(loss.loss);
    for (const auto& [name, t] : m.parameters().items()) {
      double mag = 0.0;
      for (double g : t.grad()) mag += std::fabs(g);
      INFO(name);
      // A single-key window makes the softmax constant, so its query and key get no signal.
      const bool constant_softmax = name.rfind("layer0.tmsa.", 0) == 0 &&
                                    (name.find(".w_q") != std::string::npos || name.find(".w_k") != std::string::npos);
      if (constant_softmax) {
        CHECK(mag == 0.0);
      } else {
        CHECK(mag > 0.0);
      }
    }
  }
}

TEST_CASE("masked mae") {
  const Tensor p = Tensor::from({2}, {1, 2}), y = Tensor::from({2}, {0, 4});
  const auto l = model::masked_mae_loss(p, y, 0.0);
  CHECK(l.loss.item() == 2.0);
  CHECK(l.count == 1);
  CHECK(model::masked_mae_loss(y, y, 0.0).loss.item() == 0.0);
  const auto all = model::masked_mae_loss(p, Tensor::zeros({2}), 0.0);
  CHECK(all.all_masked);
  CHECK(all.loss.item() == 0.0);
  CHECK_THROWS_AS(model::masked_mae_loss(p, Tensor::zeros({3}), 0.0), DimensionError);
}

TEST_CASE("forecaster fits statistics on training data only") {
  const Tensor v = testing::random_tensor({3, 30, 2}, 4, 1, 5);
  const auto ds = data::SeriesDataset::from_values(v);
  const auto split = data::chronological_split(ds);
  auto f = model::Forecaster::from_training_data(small_config(), model::Variant::kFull, split.train);
  Tensor altered = v.detach();
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t t = 21; t < 30; ++t) altered.mutable_values()[(n * 30 + t) * 2] = 100.0;
  }
  const auto split2 = data::chronological_split(data::SeriesDataset::from_values(altered));
  auto g = model::Forecaster::from_training_data(small_config(), model::Variant::kFull, split2.train);
  CHECK(f.norm.mean == g.norm.mean);
  CHECK(f.norm.std == g.norm.std);
  CHECK(testing::to_vec(f.static_features) == testing::to_vec(g.static_features));
  CHECK(f.model.config().input_channels == 2);
  // Static features are standardized per column across nodes.
  const Tensor& sf = f.static_features;
  for (std::size_t k = 0; k < sf.size(1); ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean += sf.at({i, k}) / 3.0;
    CHECK(std::fabs(mean) < 1e-12);
  }
}
