#include "taegcn/egc.hpp"

#include <algorithm>
#include <cmath>

#include "taegcn/error.hpp"

namespace taegcn::egc {

StaticFeatures extract_static_features(const data::SeriesDataset& train) {
  const std::size_t n = train.nodes();
  const std::size_t t = train.steps();
  const std::size_t c = train.channels();
  if (t == 0) throw ContractError("extract_static_features: empty training slice");
  std::vector<double> out(n * c * kStatsPerChannel, 0.0);
  for (std::size_t node = 0; node < n; ++node) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* f = out.data() + (node * c + ch) * kStatsPerChannel;
      double total = 0.0;
      double lo = 0.0, hi = 0.0;
      std::size_t count = 0;
      for (std::size_t s = 0; s < t; ++s) {
        if (train.is_missing(node, s, ch)) continue;
        const double x = train.at(node, s, ch);
        lo = count == 0 ? x : std::min(lo, x);
        hi = count == 0 ? x : std::max(hi, x);
        total += x;
        ++count;
      }
      f[static_cast<int>(StaticStat::kMissingFraction)] =
          static_cast<double>(t - count) / static_cast<double>(t);
      if (count == 0) continue;
      const double mu = total / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < t; ++s) {
        if (!train.is_missing(node, s, ch)) {
          const double d = train.at(node, s, ch) - mu;
          sq += d * d;
        }
      }
      double cross = 0.0, diff_sq = 0.0;
      std::size_t pairs = 0;
      for (std::size_t s = 0; s + 1 < t; ++s) {
        if (train.is_missing(node, s, ch) || train.is_missing(node, s + 1, ch)) continue;
        const double a = train.at(node, s, ch);
        const double b = train.at(node, s + 1, ch);
        cross += (a - mu) * (b - mu);
        diff_sq += (b - a) * (b - a);
        ++pairs;
      }
      f[static_cast<int>(StaticStat::kMean)] = mu;
      f[static_cast<int>(StaticStat::kStd)] = std::sqrt(sq / static_cast<double>(count));
      f[static_cast<int>(StaticStat::kMin)] = lo;
      f[static_cast<int>(StaticStat::kMax)] = hi;
      // Zero-variance series have no defined autocorrelation; report 0.
      f[static_cast<int>(StaticStat::kLag1Autocorr)] = sq > 0.0 ? cross / sq : 0.0;
      f[static_cast<int>(StaticStat::kDiffRms)] =
          pairs > 0 ? std::sqrt(diff_sq / static_cast<double>(pairs)) : 0.0;
    }
  }
  return StaticFeatures{Tensor::from({n, c * kStatsPerChannel}, std::move(out))};
}

Tensor standardize_columns(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("standardize_columns: expected [N, F], got " + ad::to_string(features.shape()));
  const std::size_t n = features.size(0), f = features.size(1);
  const auto in = features.values();
  std::vector<double> out(n * f, 0.0);
  for (std::size_t k = 0; k < f; ++k) {
    double mu = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += in[i * f + k];
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sq += (in[i * f + k] - mu) * (in[i * f + k] - mu);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    if (sd < 1e-8) continue;
    for (std::size_t i = 0; i < n; ++i) out[i * f + k] = (in[i * f + k] - mu) / sd;
  }
  return Tensor::from({n, f}, std::move(out));
}

StateInitParams StateInitParams::create(ad::ParameterStore& store, const std::string& prefix,
                                        std::size_t static_dim, std::size_t state_dim,
                                        std::uint64_t seed) {
  return {store.add_uniform(prefix + ".w_s", {static_dim, state_dim}, static_dim, seed),
          store.add(prefix + ".b_s", {state_dim})};
}

Tensor init_state(const Tensor& static_features, const StateInitParams& params) {
  if (static_features.rank() != 2 || static_features.size(1) != params.w_s.size(0)) {
    throw DimensionError("init_state: static features " + ad::to_string(static_features.shape()) +
                         " do not match W_s " + ad::to_string(params.w_s.shape()));
  }
  return ad::tanh(ad::add(ad::matmul(static_features, params.w_s), params.b_s));
}

GruParams GruParams::create(ad::ParameterStore& store, const std::string& prefix,
                            std::size_t feature_dim, std::size_t state_dim, std::uint64_t seed) {
  const std::size_t in = feature_dim + state_dim;
  GruParams p;
  p.w_r = store.add_uniform(prefix + ".w_r", {in, state_dim}, in, seed);
  p.w_u = store.add_uniform(prefix + ".w_u", {in, state_dim}, in, seed);
  p.w_o = store.add_uniform(prefix + ".w_o", {in, state_dim}, in, seed);
  p.b_r = store.add(prefix + ".b_r", {state_dim});
  p.b_u = store.add(prefix + ".b_u", {state_dim});
  p.b_o = store.add(prefix + ".b_o", {state_dim});
  return p;
}

std::size_t GruParams::parameter_count(std::size_t feature_dim, std::size_t state_dim) {
  return 3 * ((feature_dim + state_dim) * state_dim + state_dim);
}

namespace {

PairMlp make_pair_mlp(ad::ParameterStore& store, const std::string& prefix, std::size_t d,
                      std::uint64_t seed, double out_bias) {
  PairMlp m{store.add_uniform(prefix + ".w1", {2 * d, d}, 2 * d, seed), store.add(prefix + ".b1", {d}),
            store.add_uniform(prefix + ".w2", {d, 1}, d, seed), store.add(prefix + ".b2", {1})};
  m.b2.mutable_values()[0] = out_bias;
  return m;
}

}  // namespace

PairScorerParams PairScorerParams::create(ad::ParameterStore& store, const std::string& prefix,
                                          std::size_t state_dim, std::uint64_t seed) {
  // Candidate edges start inside the active region of the ReLU.
  return {make_pair_mlp(store, prefix + ".mlp_e", state_dim, seed, kEdgeBiasInit),
          make_pair_mlp(store, prefix + ".mlp_m", state_dim, seed, 0.0)};
}

std::size_t PairScorerParams::parameter_count(std::size_t d) {
  return 2 * (2 * d * d + d + d + 1);
}

Tensor pool_period(const Tensor& xi, std::size_t period, std::size_t period_length) {
  if (xi.rank() != 4) throw DimensionError("pool_period: expected [B,N,T,C], got " + ad::to_string(xi.shape()));
  if (period_length == 0) throw ContractError("pool_period: empty period");
  const std::size_t begin = period * period_length;
  const std::size_t end = begin + period_length;
  if (end > xi.size(2)) {
    throw ContractError("pool_period: period " + std::to_string(period) + " of length " +
                        std::to_string(period_length) + " exceeds T=" + std::to_string(xi.size(2)));
  }
  return ad::mean(ad::slice(xi, 2, begin, end), 2);
}

Tensor gru_step(const Tensor& gamma, const Tensor& alpha_prev, const GruParams& p) {
  const std::size_t in = p.w_r.size(0);
  if (gamma.rank() != alpha_prev.rank() || gamma.size(gamma.rank() - 1) + alpha_prev.size(alpha_prev.rank() - 1) != in) {
    throw DimensionError("gru_step: gamma " + ad::to_string(gamma.shape()) + " and state " +
                         ad::to_string(alpha_prev.shape()) + " do not match W " +
                         ad::to_string(p.w_r.shape()));
  }
  const std::size_t last = gamma.rank() - 1;
  const Tensor joined = ad::concat({gamma, alpha_prev}, last);
  const Tensor r = ad::sigmoid(ad::add(ad::matmul(joined, p.w_r), p.b_r));
  const Tensor u = ad::sigmoid(ad::add(ad::matmul(joined, p.w_u), p.b_u));
  const Tensor reset = ad::concat({gamma, ad::mul(r, alpha_prev)}, last);
  const Tensor o = ad::tanh(ad::add(ad::matmul(reset, p.w_o), p.b_o));
  // u * alpha_prev + (1 - u) * o
  return ad::add(o, ad::mul(u, ad::sub(alpha_prev, o)));
}

Tensor pair_sum(const Tensor& left, const Tensor& right) {
  if (left.shape() != right.shape() || left.rank() < 2) {
    throw DimensionError("pair_sum: shapes " + ad::to_string(left.shape()) + " and " +
                         ad::to_string(right.shape()) + " differ");
  }
  const ad::Shape& s = left.shape();
  const std::size_t n = s[s.size() - 2];
  const std::size_t h = s[s.size() - 1];
  const std::size_t batches = left.numel() / (n * h);
  ad::Shape out_shape(s.begin(), s.end() - 1);
  out_shape.push_back(n);
  out_shape.push_back(h);
  std::vector<double> out(batches * n * n * h);
  const double* l = left.values().data();
  const double* r = right.values().data();
  for (std::size_t p = 0; p < batches; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double* dst = out.data() + ((p * n + i) * n + j) * h;
        const double* li = l + (p * n + i) * h;
        const double* rj = r + (p * n + j) * h;
        for (std::size_t k = 0; k < h; ++k) dst[k] = li[k] + rj[k];
      }
    }
  }
  return ad::make_result(std::move(out_shape), std::move(out), {left, right},
                         [batches, n, h](std::span<const double> g, std::vector<std::span<double>>& gi) {
                           for (std::size_t p = 0; p < batches; ++p) {
                             for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                 const double* src = g.data() + ((p * n + i) * n + j) * h;
                                 if (!gi[0].empty()) {
                                   double* li = gi[0].data() + (p * n + i) * h;
                                   for (std::size_t k = 0; k < h; ++k) li[k] += src[k];
                                 }
                                 if (!gi[1].empty()) {
                                   double* rj = gi[1].data() + (p * n + j) * h;
                                   for (std::size_t k = 0; k < h; ++k) rj[k] += src[k];
                                 }
                               }
                             }
                           }
                         });
}

Tensor score_pairs(const Tensor& alpha, const PairMlp& mlp) {
  const std::size_t d = mlp.w2.size(0);
  if (alpha.rank() < 2 || alpha.size(alpha.rank() - 1) != d) {
    throw DimensionError("score_pairs: state " + ad::to_string(alpha.shape()) +
                         " does not match MLP width " + std::to_string(d));
  }
  // [a_i; a_j] W1 == a_i W1[:d] + a_j W1[d:]
  const Tensor from_i = ad::matmul(alpha, ad::slice(mlp.w1, 0, 0, d));
  const Tensor from_j = ad::matmul(alpha, ad::slice(mlp.w1, 0, d, 2 * d));
  const Tensor hidden = ad::relu(ad::add(pair_sum(from_i, from_j), mlp.b1));
  const Tensor out = ad::add(ad::matmul(hidden, mlp.w2), mlp.b2);
  ad::Shape s(out.shape().begin(), out.shape().end() - 1);
  return ad::reshape(out, std::move(s));
}

Tensor build_adjacency(const Tensor& alpha, const PairScorerParams& params) {
  const Tensor candidate = ad::relu(score_pairs(alpha, params.edge));
  const Tensor gate = ad::sigmoid(score_pairs(alpha, params.message));
  return ad::mul(candidate, gate);
}

AdjacencySequence evolve_sequence(const Tensor& xi, const Tensor& alpha0, const GruParams& gru,
                                  const PairScorerParams& scorer, std::size_t period_length) {
  if (xi.rank() != 4) throw DimensionError("evolve_sequence: expected [B,N,T,C], got " + ad::to_string(xi.shape()));
  if (period_length == 0 || xi.size(2) % period_length != 0) {
    throw ConfigError("evolve_sequence: T=" + std::to_string(xi.size(2)) +
                      " is not divisible by period length " + std::to_string(period_length));
  }
  if (alpha0.rank() != 2 || alpha0.size(0) != xi.size(1)) {
    throw DimensionError("evolve_sequence: initial state " + ad::to_string(alpha0.shape()) +
                         " does not match " + std::to_string(xi.size(1)) + " nodes");
  }
  AdjacencySequence seq;
  seq.period_length = period_length;
  Tensor alpha = ad::expand_leading(alpha0, xi.size(0));
  const std::size_t periods = xi.size(2) / period_length;
  for (std::size_t m = 0; m < periods; ++m) {
    alpha = gru_step(pool_period(xi, m, period_length), alpha, gru);
    seq.states.push_back(alpha);
    seq.periods.push_back(build_adjacency(alpha, scorer));
  }
  return seq;
}

AdjacencySequence static_sequence(const Tensor& alpha0, const PairScorerParams& scorer,
                                  std::size_t batch, std::size_t steps, std::size_t period_length) {
  if (period_length == 0 || steps % period_length != 0) {
    throw ConfigError("static_sequence: T=" + std::to_string(steps) +
                      " is not divisible by period length " + std::to_string(period_length));
  }
  AdjacencySequence seq;
  seq.period_length = period_length;
  const Tensor a = ad::expand_leading(build_adjacency(alpha0, scorer), batch);
  const Tensor state = ad::expand_leading(alpha0, batch);
  for (std::size_t m = 0; m < steps / period_length; ++m) {
    seq.periods.push_back(a);
    seq.states.push_back(state);
  }
  return seq;
}

}  // namespace taegcn::egc
