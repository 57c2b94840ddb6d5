#include "taegcn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "taegcn/error.hpp"

namespace taegcn::ad {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return node;
}

const Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *t.node();
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary op, const char* name) {
  const Node& na = node_of(a);
  const Node& nb = node_of(b);
  const bool b_inner = is_suffix(nb.shape, na.shape);
  const bool a_inner = !b_inner && is_suffix(na.shape, nb.shape);
  if (!b_inner && !a_inner) {
    throw DimensionError(std::string(name) + ": shapes " + to_string(na.shape) + " and " +
                         to_string(nb.shape) + " are not broadcast-compatible");
  }
  const Shape out_shape = b_inner ? na.shape : nb.shape;
  const std::size_t n = numel(out_shape);
  const std::size_t na_el = na.value.size();
  const std::size_t nb_el = nb.value.size();
  std::vector<double> out(n);
  const double* av = na.value.data();
  const double* bv = nb.value.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i % na_el];
    const double y = bv[i % nb_el];
    switch (op) {
      case Binary::kAdd: out[i] = x + y; break;
      case Binary::kSub: out[i] = x - y; break;
      case Binary::kMul: out[i] = x * y; break;
    }
  }
  auto a_node = a.node();
  auto b_node = b.node();
  return make_result(out_shape, std::move(out), {a, b},
                     [a_node, b_node, op, na_el, nb_el](std::span<const double> g,
                                                        std::vector<std::span<double>>& gi) {
                       const double* av = a_node->value.data();
                       const double* bv = b_node->value.data();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const std::size_t ia = i % na_el;
                         const std::size_t ib = i % nb_el;
                         switch (op) {
                           case Binary::kAdd:
                             if (!gi[0].empty()) gi[0][ia] += g[i];
                             if (!gi[1].empty()) gi[1][ib] += g[i];
                             break;
                           case Binary::kSub:
                             if (!gi[0].empty()) gi[0][ia] += g[i];
                             if (!gi[1].empty()) gi[1][ib] -= g[i];
                             break;
                           case Binary::kMul:
                             if (!gi[0].empty()) gi[0][ia] += g[i] * bv[ib];
                             if (!gi[1].empty()) gi[1][ib] += g[i] * av[ia];
                             break;
                         }
                       }
                     });
}

// Unary elementwise op whose derivative is expressed through input x and
// output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const Node& na = node_of(a);
  std::vector<double> out(na.value.size());
  std::transform(na.value.begin(), na.value.end(), out.begin(), fwd);
  auto a_node = a.node();
  Tensor result = make_result(na.shape, std::move(out), {a}, nullptr);
  if (!result.is_leaf()) {
    std::weak_ptr<Node> self = result.node();
    result.node()->backward = [a_node, self, deriv](std::span<const double> g,
                                                    std::vector<std::span<double>>& gi) {
      auto out_node = self.lock();
      const double* x = a_node->value.data();
      const double* y = out_node->value.data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * deriv(x[i], y[i]);
    };
  }
  return result;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

void check_axis(const Tensor& a, std::size_t axis, const char* name) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(name) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(a.shape()));
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::size(std::size_t axis) const {
  check_axis(*this, axis, "size");
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_of(*this).value.size(); }

std::span<const double> Tensor::values() const { return node_of(*this).value; }

std::span<double> Tensor::mutable_values() {
  node_of(*this);
  return node_->value;
}

std::span<const double> Tensor::grad() const { return node_of(*this).grad; }

std::span<double> Tensor::mutable_grad() {
  node_of(*this);
  node_->ensure_grad();
  return node_->grad;
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

bool Tensor::is_leaf() const { return node_of(*this).inputs.empty(); }

void Tensor::zero_grad() {
  node_of(*this);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  const Node& n = node_of(*this);
  if (n.value.size() != 1) {
    throw DimensionError("item: tensor of shape " + to_string(n.shape) + " is not a scalar");
  }
  return n.value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Node& n = node_of(*this);
  if (index.size() != n.shape.size()) {
    throw DimensionError("at: index rank does not match shape " + to_string(n.shape));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= n.shape[axis]) throw DimensionError("at: index out of range for " + to_string(n.shape));
    flat = flat * n.shape[axis] + i;
    ++axis;
  }
  return n.value[flat];
}

bool Tensor::all_finite() const {
  const Node& n = node_of(*this);
  return std::all_of(n.value.begin(), n.value.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::detach(bool requires_grad) const {
  const Node& n = node_of(*this);
  return Tensor(new_leaf(n.shape, n.value, requires_grad));
}

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
  auto node = new_leaf(std::move(shape), std::move(values), false);
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return node_of(t).requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor::wrap(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  const Node& root = node_of(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->inputs.empty()) n->grad.assign(n->value.size(), 0.0);
  }
  Node* root_node = loss.node().get();
  root_node->ensure_grad();
  root_node->grad[0] += 1.0;

  std::vector<std::span<double>> grad_inputs;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->inputs.empty() || !n->backward) continue;
    grad_inputs.clear();
    for (auto& in : n->inputs) {
      if (in->requires_grad) {
        in->ensure_grad();
        grad_inputs.emplace_back(in->grad);
      } else {
        grad_inputs.emplace_back();
      }
    }
    n->backward(n->grad, grad_inputs);
  }
  // Interior gradients are scratch space; release them.
  for (Node* n : order) {
    if (!n->inputs.empty() && n != root_node) std::vector<double>().swap(n->grad);
  }
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = node_of(a).shape;
  const Shape& sb = node_of(b).shape;
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul: shape mismatch " + to_string(sa) + " x " + to_string(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const std::size_t n = sb[sb.size() - 1];

  // Right-aligned broadcast of the leading (batch) axes.
  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  const std::size_t rank = std::max(ba.size(), bb.size());
  Shape batch(rank);
  std::vector<std::size_t> stride_a(rank, 0), stride_b(rank, 0);
  {
    const auto sta = strides_of(ba);
    const auto stb = strides_of(bb);
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t ia = i + ba.size();
      const std::size_t ib = i + bb.size();
      const std::size_t ea = ia >= rank ? ba[ia - rank] : 1;
      const std::size_t eb = ib >= rank ? bb[ib - rank] : 1;
      if (ea != eb && ea != 1 && eb != 1) {
        throw DimensionError("matmul: batch axes of " + to_string(sa) + " and " + to_string(sb) +
                             " do not broadcast");
      }
      batch[i] = std::max(ea, eb);
      if (ea != 1) stride_a[i] = sta[ia - rank];
      if (eb != 1) stride_b[i] = stb[ib - rank];
    }
  }
  const std::size_t batches = numel(batch);
  std::vector<std::size_t> off_a(batches), off_b(batches);
  for (std::size_t flat = 0; flat < batches; ++flat) {
    std::size_t rem = flat;
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = rank; i-- > 0;) {
      const std::size_t idx = rem % batch[i];
      rem /= batch[i];
      oa += idx * stride_a[i];
      ob += idx * stride_b[i];
    }
    off_a[flat] = oa * m * k;
    off_b[flat] = ob * k * n;
  }

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batches * m * n, 0.0);
  const double* av = node_of(a).value.data();
  const double* bv = node_of(b).value.data();
  for (std::size_t p = 0; p < batches; ++p) {
    const double* A = av + off_a[p];
    const double* B = bv + off_b[p];
    double* C = out.data() + p * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = A[i * k + kk];
        const double* brow = B + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  }

  auto a_node = a.node();
  auto b_node = b.node();
  return make_result(
      std::move(out_shape), std::move(out), {a, b},
      [a_node, b_node, m, k, n, off_a = std::move(off_a), off_b = std::move(off_b)](
          std::span<const double> g, std::vector<std::span<double>>& gi) {
        const double* av = a_node->value.data();
        const double* bv = b_node->value.data();
        for (std::size_t p = 0; p < off_a.size(); ++p) {
          const double* G = g.data() + p * m * n;
          const double* A = av + off_a[p];
          const double* B = bv + off_b[p];
          if (!gi[0].empty()) {
            double* dA = gi[0].data() + off_a[p];
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = G + i * n;
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double* brow = B + kk * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                dA[i * k + kk] += acc;
              }
            }
          }
          if (!gi[1].empty()) {
            double* dB = gi[1].data() + off_b[p];
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = G + i * n;
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = A[i * k + kk];
                double* drow = dB + kk * n;
                for (std::size_t j = 0; j < n; ++j) drow[j] += aik * grow[j];
              }
            }
          }
        }
      });
}

Tensor transpose_last2(const Tensor& a) {
  const Shape& s = node_of(a).shape;
  if (s.size() < 2) throw DimensionError("transpose_last2: rank < 2 for " + to_string(s));
  const std::size_t r = s[s.size() - 2];
  const std::size_t c = s[s.size() - 1];
  const std::size_t batches = numel(s) / (r * c);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  const double* av = node_of(a).value.data();
  std::vector<double> out(numel(s));
  for (std::size_t p = 0; p < batches; ++p) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[p * r * c + j * r + i] = av[p * r * c + i * c + j];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {a},
                     [r, c, batches](std::span<const double> g, std::vector<std::span<double>>& gi) {
                       for (std::size_t p = 0; p < batches; ++p) {
                         for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             gi[0][p * r * c + i * c + j] += g[p * r * c + j * r + i];
                           }
                         }
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  const Node& na = node_of(a);
  if (numel(shape) != na.value.size()) {
    throw DimensionError("reshape: cannot view " + to_string(na.shape) + " as " + to_string(shape));
  }
  return make_result(std::move(shape), na.value, {a},
                     [](std::span<const double> g, std::vector<std::span<double>>& gi) {
                       for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = node_of(parts[0]).shape;
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = node_of(p).shape;
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " +
                           to_string(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = numel(Shape(first.begin(), first.begin() + axis));
  const std::size_t inner = numel(Shape(first.begin() + axis + 1, first.end()));
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const double* src = node_of(p).value.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * w, src + (o + 1) * w, out.begin() + o * out_row + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [outer, out_row, widths](std::span<const double> g,
                                              std::vector<std::span<double>>& gi) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         const std::size_t w = widths[p];
                         if (!gi[p].empty()) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = g.data() + o * out_row + offset;
                             double* dst = gi[p].data() + o * w;
                             for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
                           }
                         }
                         offset += w;
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis(a, axis, "slice");
  const Shape& s = node_of(a).shape;
  if (begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + to_string(s));
  }
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  const std::size_t in_row = s[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * w);
  const double* src = node_of(a).value.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(src + o * in_row + begin * inner, src + o * in_row + begin * inner + w,
              out.begin() + o * w);
  }
  const std::size_t first = begin * inner;
  return make_result(std::move(out_shape), std::move(out), {a},
                     [outer, in_row, w, first](std::span<const double> g,
                                               std::vector<std::span<double>>& gi) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         double* dst = gi[0].data() + o * in_row + first;
                         const double* src = g.data() + o * w;
                         for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "mean");
  const Shape& s = node_of(a).shape;
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t len = s[axis];
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(outer * inner, 0.0);
  const double* src = node_of(a).value.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = 0; t < len; ++t) {
      const double* row = src + (o * len + t) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(len);
  for (double& v : out) v *= inv;
  return make_result(std::move(out_shape), std::move(out), {a},
                     [outer, len, inner, inv](std::span<const double> g,
                                              std::vector<std::span<double>>& gi) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t t = 0; t < len; ++t) {
                           double* dst = gi[0].data() + (o * len + t) * inner;
                           const double* src = g.data() + o * inner;
                           for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                         }
                       }
                     });
}

Tensor sum(const Tensor& a) {
  const Node& na = node_of(a);
  double total = 0.0;
  for (double v : na.value) total += v;
  return make_result({}, {total}, {a},
                     [](std::span<const double> g, std::vector<std::span<double>>& gi) {
                       for (double& d : gi[0]) d += g[0];
                     });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (node_of(a).shape != node_of(b).shape) {
    throw DimensionError("dot: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " differ");
  }
  return sum(mul(a, b));
}

Tensor expand_leading(const Tensor& a, std::size_t count) {
  if (count == 0) throw DimensionError("expand_leading: count must be positive");
  const Node& na = node_of(a);
  const std::size_t n = na.value.size();
  Shape out_shape;
  out_shape.push_back(count);
  out_shape.insert(out_shape.end(), na.shape.begin(), na.shape.end());
  std::vector<double> out(count * n);
  for (std::size_t c = 0; c < count; ++c) std::copy(na.value.begin(), na.value.end(), out.begin() + c * n);
  return make_result(std::move(out_shape), std::move(out), {a},
                     [count, n](std::span<const double> g, std::vector<std::span<double>>& gi) {
                       for (std::size_t c = 0; c < count; ++c) {
                         for (std::size_t i = 0; i < n; ++i) gi[0][i] += g[c * n + i];
                       }
                     });
}

Tensor shift(const Tensor& a, std::size_t axis, std::size_t offset) {
  check_axis(a, axis, "shift");
  const Shape& s = node_of(a).shape;
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t len = s[axis];
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  const std::size_t k = std::min(offset, len);
  std::vector<double> out(numel(s), 0.0);
  const double* src = node_of(a).value.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = k; t < len; ++t) {
      std::copy(src + (o * len + t - k) * inner, src + (o * len + t - k + 1) * inner,
                out.begin() + (o * len + t) * inner);
    }
  }
  return make_result(s, std::move(out), {a},
                     [outer, len, inner, k](std::span<const double> g,
                                            std::vector<std::span<double>>& gi) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t t = k; t < len; ++t) {
                           double* dst = gi[0].data() + (o * len + t - k) * inner;
                           const double* src = g.data() + (o * len + t) * inner;
                           for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor masked_softmax(const Tensor& scores, const BoolMatrix& mask) {
  const Shape& s = node_of(scores).shape;
  if (s.size() < 2 || s[s.size() - 2] != mask.rows || s[s.size() - 1] != mask.cols) {
    throw DimensionError("masked_softmax: scores " + to_string(s) + " do not match mask [" +
                         std::to_string(mask.rows) + "," + std::to_string(mask.cols) + "]");
  }
  for (std::size_t r = 0; r < mask.rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < mask.cols && !any; ++c) any = mask(r, c);
    if (!any) {
      throw ContractError("masked_softmax: degenerate row " + std::to_string(r) +
                          " has no allowed entry");
    }
  }
  const std::size_t rows = mask.rows;
  const std::size_t cols = mask.cols;
  const std::size_t batches = numel(s) / (rows * cols);
  const double* src = node_of(scores).value.data();
  std::vector<double> out(numel(s), 0.0);
  for (std::size_t p = 0; p < batches; ++p) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = src + (p * rows + r) * cols;
      double* y = out.data() + (p * rows + r) * cols;
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cols; ++c) {
        if (mask(r, c)) hi = std::max(hi, x[c]);
      }
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        if (mask(r, c)) {
          y[c] = std::exp(x[c] - hi);
          total += y[c];
        }
      }
      const double inv = 1.0 / total;
      for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
    }
  }
  Tensor result = make_result(s, std::move(out), {scores}, nullptr);
  if (!result.is_leaf()) {
    std::weak_ptr<Node> self = result.node();
    result.node()->backward = [self, rows, cols, batches](std::span<const double> g,
                                                         std::vector<std::span<double>>& gi) {
      auto out_node = self.lock();
      const double* y = out_node->value.data();
      for (std::size_t p = 0; p < batches * rows; ++p) {
        const double* yr = y + p * cols;
        const double* gr = g.data() + p * cols;
        double inner = 0.0;
        for (std::size_t c = 0; c < cols; ++c) inner += gr[c] * yr[c];
        double* dst = gi[0].data() + p * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += yr[c] * (gr[c] - inner);
      }
    };
  }
  return result;
}

}  // namespace taegcn::ad
