#include "taegcn/optim.hpp"

#include <cmath>
#include <random>

#include "taegcn/error.hpp"

namespace taegcn::ad {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Tensor ParameterStore::add(const std::string& path, Shape shape) {
  if (params_.count(path)) throw ContractError("parameter '" + path + "' registered twice");
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.emplace(path, t);
  return t;
}

Tensor ParameterStore::add_uniform(const std::string& path, Shape shape, std::size_t fan_in,
                                   std::uint64_t seed) {
  Tensor t = add(path, std::move(shape));
  std::mt19937_64 rng(seed ^ fnv1a(path));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

const Tensor& ParameterStore::get(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw ContractError("unknown parameter '" + path + "'");
  return it->second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) {
    Tensor h = t;
    h.zero_grad();
  }
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : params_) out.emplace(name, std::vector<double>(t.values().begin(), t.values().end()));
  return out;
}

void ParameterStore::restore(const std::map<std::string, std::vector<double>>& values) {
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw ContractError("restore: missing parameter '" + name + "'");
    if (it->second.size() != t.numel()) {
      throw DimensionError("restore: parameter '" + name + "' expects " +
                           std::to_string(t.numel()) + " values, got " +
                           std::to_string(it->second.size()));
    }
    Tensor h = t;
    std::copy(it->second.begin(), it->second.end(), h.mutable_values().begin());
  }
}

void adam_step(ParameterStore& store, AdamState& state) {
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& [name, param] : store.items()) {
    Tensor p = param;
    auto theta = p.mutable_values();
    auto grad = p.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != theta.size()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = (grad.empty() ? 0.0 : grad[i]) + c.weight_decay * theta[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
    p.zero_grad();
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : store.items()) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (const auto& [_, t] : store.items()) {
      Tensor h = t;
      for (double& g : h.mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace taegcn::ad
