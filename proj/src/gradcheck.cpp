#include "taegcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "taegcn/egc.hpp"
#include "taegcn/gcn.hpp"
#include "taegcn/model.hpp"
#include "taegcn/tmsa.hpp"

namespace taegcn::gradcheck {

Result check(const std::string& name, const std::function<Tensor()>& loss,
             const std::vector<Tensor>& leaves, double step) {
  for (Tensor leaf : leaves) leaf.zero_grad();
  ad::backward(loss());
  Result result{name, 0.0, 0};
  ad::NoGradGuard no_grad;
  for (Tensor leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    std::vector<double> numeric(analytic.size());
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().item();
      values[i] = saved - step;
      const double down = loss().item();
      values[i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    double diff = 0.0, scale = 1e-6;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff = std::max(diff, std::fabs(analytic[i] - numeric[i]));
      scale = std::max({scale, std::fabs(analytic[i]), std::fabs(numeric[i])});
    }
    result.max_rel_error = std::max(result.max_rel_error, diff / scale);
    result.entries += numeric.size();
    leaf.zero_grad();
  }
  return result;
}

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Tensor leaf(ad::Shape shape, double lo = -1.0, double hi = 1.0) {
    return fill(std::move(shape), lo, hi, true);
  }
  Tensor constant(ad::Shape shape, double lo = -1.0, double hi = 1.0) {
    return fill(std::move(shape), lo, hi, false);
  }

 private:
  Tensor fill(ad::Shape shape, double lo, double hi, bool grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(ad::numel(shape));
    for (double& x : v) x = dist(rng_);
    return Tensor::from(std::move(shape), std::move(v), grad);
  }
  std::mt19937_64 rng_;
};

/// Scalar loss <out, R> with a fixed random R; a plain sum would hide errors
/// in ops whose outputs sum to a constant (softmax rows, normalized graphs).
std::function<Tensor()> projected(std::function<Tensor()> op, Sampler& s) {
  auto probe = std::make_shared<Tensor>();
  auto sampler = &s;
  {
    ad::NoGradGuard g;
    *probe = sampler->constant(op().shape());
  }
  return [op = std::move(op), probe]() { return ad::dot(op(), *probe); };
}

void add_model_checks(std::vector<Result>& out, std::uint64_t seed) {
  Sampler s(seed ^ 0xabcdefULL);
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.windows = {1, 3};
  cfg.heads = 2;
  cfg.hidden = 8;
  cfg.state_dim = 4;
  cfg.period = 3;
  cfg.input_length = 6;
  cfg.horizon = 3;
  cfg.skip = 8;
  cfg.head_hidden = 16;
  cfg.input_channels = 2;
  cfg.seed = seed;
  const std::size_t nodes = 2;
  const Tensor x = s.constant({2, nodes, cfg.input_length, cfg.input_channels});
  const Tensor statics = s.constant({nodes, egc::kStatsPerChannel * cfg.input_channels});
  const Tensor target = s.constant({2, nodes, cfg.horizon}, 0.5, 2.0);
  for (model::Variant v : {model::Variant::kFull, model::Variant::kAblateTmsa, model::Variant::kAblateEgc}) {
    model::TaegcnModel m(cfg, v);
    // Zero-initialized tensors (biases) are spread so no unit sits exactly on a kink.
    std::vector<Tensor> leaves;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> spread(-0.1, 0.1);
    for (const auto& [_, t] : m.parameters().items()) {
      Tensor p = t;
      auto values = p.mutable_values();
      if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) {
        for (double& val : values) val = spread(rng);
      }
      leaves.push_back(p);
    }
    const auto loss = [&m, &x, &statics, &target]() {
      const Tensor pred = ad::add_scalar(ad::scale(m.forward(x, statics), 1.3), 0.7);
      return model::masked_mae_loss(pred, target, 0.0).loss;
    };
    out.push_back(check("model_masked_mae[" + model::to_string(v) + "]", loss, leaves, kModelStep));
  }
}

}  // namespace

std::vector<Result> run_suite(std::uint64_t seed) {
  Sampler s(seed);
  std::vector<Result> out;
  const auto unary = [&](const std::string& name, Tensor (*f)(const Tensor&)) {
    Tensor a = s.leaf({3, 4});
    out.push_back(check(name, projected([a, f]() { return f(a); }, s), {a}));
  };

  {
    Tensor a = s.leaf({2, 3, 4}), b = s.leaf({4, 5});
    out.push_back(check("matmul", projected([a, b]() { return ad::matmul(a, b); }, s), {a, b}));
    Tensor c = s.leaf({2, 1, 3, 4}), d = s.leaf({3, 4, 2});
    out.push_back(check("matmul_broadcast", projected([c, d]() { return ad::matmul(c, d); }, s), {c, d}));
  }
  {
    Tensor a = s.leaf({2, 3, 4}), b = s.leaf({4});
    out.push_back(check("add", projected([a, b]() { return ad::add(a, b); }, s), {a, b}));
    out.push_back(check("sub", projected([a, b]() { return ad::sub(a, b); }, s), {a, b}));
    Tensor c = s.leaf({2, 3, 4});
    out.push_back(check("mul", projected([a, c]() { return ad::mul(a, c); }, s), {a, c}));
    out.push_back(check("mul_broadcast", projected([a, b]() { return ad::mul(a, b); }, s), {a, b}));
  }
  {
    Tensor a = s.leaf({3, 4});
    out.push_back(check("scale", projected([a]() { return ad::scale(a, -2.5); }, s), {a}));
    out.push_back(check("add_scalar", projected([a]() { return ad::add_scalar(a, 0.75); }, s), {a}));
  }
  unary("sigmoid", &ad::sigmoid);
  unary("tanh", &ad::tanh);
  unary("relu", &ad::relu);
  unary("abs", &ad::abs);
  unary("transpose_last2", &ad::transpose_last2);
  {
    Tensor a = s.leaf({2, 3, 4});
    out.push_back(check("reshape", projected([a]() { return ad::reshape(a, {4, 6}); }, s), {a}));
    Tensor b = s.leaf({2, 3, 2});
    out.push_back(check("concat", projected([a, b]() { return ad::concat({a, b}, 2); }, s), {a, b}));
    out.push_back(check("slice", projected([a]() { return ad::slice(a, 1, 1, 3); }, s), {a}));
    out.push_back(check("mean", projected([a]() { return ad::mean(a, 1); }, s), {a}));
    out.push_back(check("sum", [a]() { return ad::scale(ad::sum(ad::mul(a, a)), 0.5); }, {a}));
    out.push_back(check("dot", [a]() { return ad::dot(a, ad::tanh(a)); }, {a}));
    out.push_back(check("expand_leading", projected([a]() { return ad::expand_leading(a, 3); }, s), {a}));
    out.push_back(check("shift", projected([a]() { return ad::shift(a, 1, 2); }, s), {a}));
  }
  {
    Tensor scores = s.leaf({2, 5, 5}, -2.0, 2.0);
    const ad::BoolMatrix mask = tmsa::build_causal_window_mask(5, 3).allowed;
    out.push_back(check("masked_softmax", projected([scores, mask]() { return ad::masked_softmax(scores, mask); }, s),
                        {scores}));
  }
  {
    Tensor a = s.leaf({3, 4}), b = s.leaf({4, 2});
    out.push_back(check("composite_matmul_sigmoid_tanh",
                        [a, b]() { return ad::sum(ad::tanh(ad::sigmoid(ad::matmul(a, b)))); }, {a, b}));
  }

  // Model blocks.
  {
    ad::ParameterStore store;
    auto p = tmsa::TmsaLayerParams::create(store, "tmsa", 6, 2, {2, 4}, seed);
    Tensor z = s.leaf({2, 3, 5, 6});
    std::vector<Tensor> leaves{z};
    for (const auto& [_, t] : store.items()) leaves.push_back(t);
    Tensor bias = p.b_fc;
    for (double& v : bias.mutable_values()) v = 0.3;
    out.push_back(check("tmsa_forward", projected([z, p]() { return tmsa::tmsa_forward(z, p); }, s), leaves));
  }
  {
    model::TcnParams p{s.leaf({4, 4}), s.leaf({4, 4}), s.leaf({4}), 2};
    Tensor z = s.leaf({2, 2, 5, 4});
    out.push_back(check("tcn_forward", projected([z, p]() { return model::tcn_forward(z, p); }, s),
                        {z, p.w_now, p.w_past, p.b}));
  }
  {
    Tensor l = s.leaf({2, 3, 4}), r = s.leaf({2, 3, 4});
    out.push_back(check("pair_sum", projected([l, r]() { return egc::pair_sum(l, r); }, s), {l, r}));
  }
  {
    ad::ParameterStore store;
    auto init = egc::StateInitParams::create(store, "init", 7, 3, seed);
    auto gru = egc::GruParams::create(store, "gru", 4, 3, seed);
    auto scorer = egc::PairScorerParams::create(store, "scorer", 3, seed);
    for (const auto& [name, t] : store.items()) {
      if (name.find(".b") != std::string::npos) {
        Tensor h = t;
        for (double& v : h.mutable_values()) v = 0.2;
      }
    }
    std::vector<Tensor> params;
    for (const auto& [_, t] : store.items()) params.push_back(t);
    Tensor statics = s.leaf({3, 7});
    out.push_back(check("init_state", projected([statics, init]() { return egc::init_state(statics, init); }, s),
                        {statics, init.w_s, init.b_s}));
    Tensor gamma = s.leaf({2, 3, 4}), alpha = s.leaf({2, 3, 3});
    out.push_back(check("gru_step", projected([gamma, alpha, gru]() { return egc::gru_step(gamma, alpha, gru); }, s),
                        {gamma, alpha, gru.w_r, gru.w_u, gru.w_o, gru.b_r, gru.b_u, gru.b_o}));
    out.push_back(check("build_adjacency",
                        projected([alpha, scorer]() { return egc::build_adjacency(alpha, scorer); }, s),
                        {alpha, scorer.edge.w1, scorer.edge.b1, scorer.edge.w2, scorer.edge.b2,
                         scorer.message.w1, scorer.message.b1, scorer.message.w2, scorer.message.b2}));
    Tensor xi = s.leaf({2, 3, 6, 4});
    std::vector<Tensor> leaves{xi, statics};
    leaves.insert(leaves.end(), params.begin(), params.end());
    out.push_back(check("evolve_sequence",
                        projected(
                            [xi, statics, init, gru, scorer]() {
                              auto seq = egc::evolve_sequence(xi, egc::init_state(statics, init), gru, scorer, 3);
                              return ad::concat(seq.periods, 2);
                            },
                            s),
                        leaves));
  }
  {
    Tensor a = s.leaf({2, 4, 4}, 0.05, 1.0);
    out.push_back(check("normalize_adjacency", projected([a]() { return gcn::normalize_adjacency(a); }, s), {a}));
    ad::ParameterStore store;
    auto p = gcn::GcnParams::create(store, "gcn", 3, 3, seed);
    Tensor bias = p.b_g;
    for (double& v : bias.mutable_values()) v = 0.1;
    Tensor xi = s.leaf({2, 4, 6, 3});
    Tensor a1 = s.leaf({2, 4, 4}, 0.05, 1.0), a2 = s.leaf({2, 4, 4}, 0.05, 1.0);
    out.push_back(check("gcn_forward",
                        projected(
                            [xi, a1, a2, p]() {
                              egc::AdjacencySequence seq;
                              seq.periods = {a1, a2};
                              seq.period_length = 3;
                              return gcn::gcn_forward(xi, seq, p);
                            },
                            s),
                        {xi, a1, a2, p.w_g, p.b_g, p.w_res}));
  }
  add_model_checks(out, seed);
  return out;
}

}  // namespace taegcn::gradcheck
