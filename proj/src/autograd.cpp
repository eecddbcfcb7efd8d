#include "bfg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "bfg/errors.hpp"

namespace bfg::ag {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool backward_done = false;
  const char* op = "constant";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string Shape::str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

namespace {

std::vector<double>& grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ContractError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

[[noreturn]] void shape_error(const char* op, const Shape& a) {
  throw ContractError(std::string(op) + ": invalid shape " + a.str());
}

void check_axis(const char* op, int axis) {
  if (axis != 0 && axis != 1) throw ContractError(std::string(op) + ": axis must be 0 or 1");
}

// Creates an interior node. The backward closure is dropped when no input
// needs a gradient.
Tensor make(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
            std::function<void(Node&)> bw) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i])) {
      throw NumericError(std::string("non-finite value produced by ") + op + " (shape " + shape.str() +
                         ", flat index " + std::to_string(i) + ")");
    }
  }
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(value);
  n->op = op;
  n->leaf = false;
  n->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}

const NodePtr& checked(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
  return t.node();
}

bool broadcastable(const Shape& from, const Shape& to) {
  return (from.rows == to.rows || from.rows == 1) && (from.cols == to.cols || from.cols == 1);
}

template <typename Fwd, typename Da, typename Db>
Tensor binary(const char* op, const Tensor& a_in, const Tensor& b_in, Fwd fwd, Da da, Db db) {
  Tensor a = a_in;
  Tensor b = b_in;
  checked(a, op);
  checked(b, op);
  if (!(a.shape() == b.shape())) {
    Shape target{std::max(a.rows(), b.rows()), std::max(a.cols(), b.cols())};
    if (!broadcastable(a.shape(), target) || !broadcastable(b.shape(), target)) shape_error(op, a.shape(), b.shape());
    if (!(a.shape() == target)) a = broadcast(a, target);
    if (!(b.shape() == target)) b = broadcast(b, target);
  }
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make(op, a.shape(), std::move(out), {a.node(), b.node()}, [da, db](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da(x.value[i], y.value[i], self.value[i]);
    }
    if (y.requires_grad) {
      auto& g = grad_of(y);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db(x.value[i], y.value[i], self.value[i]);
    }
  });
}

// dfn(x, y) is the local derivative given input x and output y.
template <typename Fwd, typename Dfn>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Dfn dfn) {
  const auto& an = checked(a, op);
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(an->value[i]);
  return make(op, an->shape, std::move(out), {an}, [dfn](Node& self) {
    Node& x = *self.inputs[0];
    auto& g = grad_of(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfn(x.value[i], self.value[i]);
  });
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (shape.rows == 0 || shape.cols == 0) shape_error("constant", shape);
  if (values.size() != shape.size()) {
    throw ContractError("constant: " + std::to_string(values.size()) + " values for shape " + shape.str());
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("constant: non-finite input value");
  }
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size(), 0.0)); }

Tensor Tensor::scalar(double v) { return constant({1, 1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(shape, std::move(values));
  t.node_->requires_grad = true;
  t.node_->op = "parameter";
  t.node_->grad.assign(t.node_->value.size(), 0.0);
  return t;
}

const Shape& Tensor::shape() const { return checked(*this, "shape")->shape; }

std::span<const double> Tensor::values() const { return checked(*this, "values")->value; }

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = checked(*this, "at");
  if (r >= n->shape.rows || c >= n->shape.cols) throw ContractError("at: index out of range for " + n->shape.str());
  return n->value[r * n->shape.cols + c];
}

double Tensor::item() const {
  const auto& n = checked(*this, "item");
  if (n->shape.size() != 1) throw ContractError("item: tensor of shape " + n->shape.str() + " is not a scalar");
  return n->value[0];
}

std::span<const double> Tensor::grad() const {
  auto& n = *checked(*this, "grad");
  return grad_of(n);
}

bool Tensor::requires_grad() const { return checked(*this, "requires_grad")->requires_grad; }
bool Tensor::is_leaf() const { return checked(*this, "is_leaf")->leaf; }
const char* Tensor::op_name() const { return checked(*this, "op_name")->op; }

std::span<double> Tensor::mutable_values() {
  auto& n = *checked(*this, "mutable_values");
  if (!n.leaf) throw ContractError("mutable_values: only leaves may be modified in place");
  return n.value;
}

void Tensor::zero_grad() {
  auto& n = *checked(*this, "zero_grad");
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void backward(const Tensor& loss) {
  const auto& root = checked(loss, "backward");
  if (root->shape.size() != 1) throw ContractError("backward: loss must be scalar, got shape " + root->shape.str());
  if (root->backward_done) throw ContractError("backward: called twice on the same graph");
  root->backward_done = true;
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
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

  grad_of(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward) n.backward(n);
  }
}

Tensor stop_gradient(const Tensor& t) {
  const auto& n = checked(t, "stop_gradient");
  return make("stop_gradient", n->shape, n->value, {}, {});
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& an = checked(a, "matmul");
  const auto& bn = checked(b, "matmul");
  const std::size_t m = an->shape.rows, k = an->shape.cols, n = bn->shape.cols;
  if (bn->shape.rows != k) shape_error("matmul", an->shape, bn->shape);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = an->value[i * k + p];
      const double* brow = &bn->value[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make("matmul", {m, n}, std::move(out), {an, bn}, [m, k, n](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const auto& g = self.grad;
    if (x.requires_grad) {
      auto& gx = grad_of(x);  // G * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y.value[p * n + j];
          gx[i * k + p] += s;
        }
    }
    if (y.requires_grad) {
      auto& gy = grad_of(y);  // A^T * G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = x.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gy[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const auto& an = checked(a, "transpose");
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = an->value[i * c + j];
  return make("transpose", {c, r}, std::move(out), {an}, [r, c](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor negate(const Tensor& a) {
  return unary(
      "negate", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lower) {
  return unary(
      "clamp_min", a, [lower](double x) { return x > lower ? x : lower; },
      [lower](double x, double) { return x > lower ? 1.0 : 0.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor max_over_axis(const Tensor& a, int axis) {
  check_axis("max_over_axis", axis);
  const auto& an = checked(a, "max_over_axis");
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  const std::size_t outer = axis == 0 ? c : r;
  const std::size_t inner = axis == 0 ? r : c;
  auto flat = [=](std::size_t o, std::size_t i) { return axis == 0 ? i * c + o : o * c + i; };
  std::vector<double> out(outer);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = flat(o, 0);
    for (std::size_t i = 1; i < inner; ++i) {
      if (an->value[flat(o, i)] > an->value[best]) best = flat(o, i);
    }
    arg[o] = best;
    out[o] = an->value[best];
  }
  Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  return make("max_over_axis", shape, std::move(out), {an}, [arg = std::move(arg)](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
  });
}

Tensor sum_over_axis(const Tensor& a, int axis) {
  check_axis("sum_over_axis", axis);
  const auto& an = checked(a, "sum_over_axis");
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(shape.size(), 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += an->value[i * c + j];
  return make("sum_over_axis", shape, std::move(out), {an}, [r, c, axis](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[axis == 0 ? j : i];
  });
}

namespace {

// Shared forward for softmax / log-softmax; returns (softmax, log-softmax).
std::pair<std::vector<double>, std::vector<double>> softmax_impl(const Node& an, int axis) {
  const std::size_t r = an.shape.rows, c = an.shape.cols;
  const std::size_t outer = axis == 0 ? c : r;
  const std::size_t inner = axis == 0 ? r : c;
  auto flat = [=](std::size_t o, std::size_t i) { return axis == 0 ? i * c + o : o * c + i; };
  std::vector<double> sm(an.value.size()), lsm(an.value.size());
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, an.value[flat(o, i)]);
    double total = 0.0;
    for (std::size_t i = 0; i < inner; ++i) total += std::exp(an.value[flat(o, i)] - mx);
    const double log_total = std::log(total);
    for (std::size_t i = 0; i < inner; ++i) {
      const double l = an.value[flat(o, i)] - mx - log_total;
      lsm[flat(o, i)] = l;
      sm[flat(o, i)] = std::exp(l);
    }
  }
  return {std::move(sm), std::move(lsm)};
}

}  // namespace

Tensor softmax_over_axis(const Tensor& a, int axis) {
  check_axis("softmax_over_axis", axis);
  const auto& an = checked(a, "softmax_over_axis");
  auto [sm, lsm] = softmax_impl(*an, axis);
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  return make("softmax_over_axis", an->shape, std::move(sm), {an}, [r, c, axis](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    const std::size_t outer = axis == 0 ? c : r;
    const std::size_t inner = axis == 0 ? r : c;
    auto flat = [=](std::size_t o, std::size_t i) { return axis == 0 ? i * c + o : o * c + i; };
    for (std::size_t o = 0; o < outer; ++o) {
      double dot = 0.0;
      for (std::size_t i = 0; i < inner; ++i) dot += self.grad[flat(o, i)] * self.value[flat(o, i)];
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t f = flat(o, i);
        g[f] += self.value[f] * (self.grad[f] - dot);
      }
    }
  });
}

Tensor log_softmax_over_axis(const Tensor& a, int axis) {
  check_axis("log_softmax_over_axis", axis);
  const auto& an = checked(a, "log_softmax_over_axis");
  auto [sm, lsm] = softmax_impl(*an, axis);
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  return make("log_softmax_over_axis", an->shape, std::move(lsm), {an},
              [r, c, axis, sm = std::move(sm)](Node& self) {
                auto& g = grad_of(*self.inputs[0]);
                const std::size_t outer = axis == 0 ? c : r;
                const std::size_t inner = axis == 0 ? r : c;
                auto flat = [=](std::size_t o, std::size_t i) { return axis == 0 ? i * c + o : o * c + i; };
                for (std::size_t o = 0; o < outer; ++o) {
                  double total = 0.0;
                  for (std::size_t i = 0; i < inner; ++i) total += self.grad[flat(o, i)];
                  for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t f = flat(o, i);
                    g[f] += self.grad[f] - sm[f] * total;
                  }
                }
              });
}

Tensor sum_all(const Tensor& a) {
  const auto& an = checked(a, "sum_all");
  double s = 0.0;
  for (double v : an->value) s += v;
  return make("sum_all", {1, 1}, {s}, {an}, [](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.shape().size())); }

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  const auto& an = checked(a, "gather_rows");
  const std::size_t c = an->shape.cols;
  if (indices.empty()) throw ContractError("gather_rows: empty index list");
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= an->shape.rows) {
      throw ContractError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " + an->shape.str());
    }
    std::copy_n(&an->value[indices[i] * c], c, &out[i * c]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make("gather_rows", {indices.size(), c}, std::move(out), {an}, [idx = std::move(idx), c](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor scatter_mean(const Tensor& a, std::span<const std::size_t> bins, std::size_t n_bins) {
  const auto& an = checked(a, "scatter_mean");
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  if (bins.size() != r) {
    throw ContractError("scatter_mean: " + std::to_string(bins.size()) + " bin ids for " + std::to_string(r) + " rows");
  }
  if (n_bins == 0) throw ContractError("scatter_mean: zero bins");
  std::vector<double> counts(n_bins, 0.0);
  for (std::size_t b : bins) {
    if (b >= n_bins) throw ContractError("scatter_mean: bin id " + std::to_string(b) + " >= " + std::to_string(n_bins));
    counts[b] += 1.0;
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (counts[b] == 0.0) throw ContractError("scatter_mean: bin " + std::to_string(b) + " is empty");
  }
  std::vector<double> out(n_bins * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[bins[i] * c + j] += an->value[i * c + j];
  for (std::size_t b = 0; b < n_bins; ++b)
    for (std::size_t j = 0; j < c; ++j) out[b * c + j] /= counts[b];
  std::vector<std::size_t> idx(bins.begin(), bins.end());
  return make("scatter_mean", {n_bins, c}, std::move(out), {an},
              [idx = std::move(idx), counts = std::move(counts), c](Node& self) {
                auto& g = grad_of(*self.inputs[0]);
                for (std::size_t i = 0; i < idx.size(); ++i)
                  for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[idx[i] * c + j] / counts[idx[i]];
              });
}

Tensor broadcast(const Tensor& a, Shape shape) {
  const auto& an = checked(a, "broadcast");
  if (shape.rows == 0 || shape.cols == 0 || !broadcastable(an->shape, shape)) shape_error("broadcast", an->shape, shape);
  const std::size_t sr = an->shape.rows, sc = an->shape.cols;
  std::vector<double> out(shape.size());
  for (std::size_t i = 0; i < shape.rows; ++i)
    for (std::size_t j = 0; j < shape.cols; ++j)
      out[i * shape.cols + j] = an->value[(sr == 1 ? 0 : i) * sc + (sc == 1 ? 0 : j)];
  return make("broadcast", shape, std::move(out), {an}, [sr, sc, shape](Node& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < shape.rows; ++i)
      for (std::size_t j = 0; j < shape.cols; ++j)
        g[(sr == 1 ? 0 : i) * sc + (sc == 1 ? 0 : j)] += self.grad[i * shape.cols + j];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check_axis("concat", axis);
  if (parts.empty()) throw ContractError("concat: no inputs");
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) inputs.push_back(checked(p, "concat"));
  const Shape first = inputs.front()->shape;
  Shape shape = first;
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    const Shape& s = inputs[i]->shape;
    if (axis == 0) {
      if (s.cols != first.cols) shape_error("concat", first, s);
      shape.rows += s.rows;
    } else {
      if (s.rows != first.rows) shape_error("concat", first, s);
      shape.cols += s.cols;
    }
  }
  std::vector<double> out(shape.size());
  std::size_t offset = 0;
  for (const auto& in : inputs) {
    for (std::size_t i = 0; i < in->shape.rows; ++i)
      for (std::size_t j = 0; j < in->shape.cols; ++j) {
        const std::size_t dst = axis == 0 ? (offset + i) * shape.cols + j : i * shape.cols + offset + j;
        out[dst] = in->value[i * in->shape.cols + j];
      }
    offset += axis == 0 ? in->shape.rows : in->shape.cols;
  }
  return make("concat", shape, std::move(out), std::move(inputs), [axis, shape](Node& self) {
    std::size_t off = 0;
    for (auto& inp : self.inputs) {
      Node& in = *inp;
      if (in.requires_grad) {
        auto& g = grad_of(in);
        for (std::size_t i = 0; i < in.shape.rows; ++i)
          for (std::size_t j = 0; j < in.shape.cols; ++j) {
            const std::size_t src = axis == 0 ? (off + i) * shape.cols + j : i * shape.cols + off + j;
            g[i * in.shape.cols + j] += self.grad[src];
          }
      }
      off += axis == 0 ? in.shape.rows : in.shape.cols;
    }
  });
}

Tensor l2_row_norms(const Tensor& a) {
  const auto& an = checked(a, "l2_row_norms");
  const std::size_t r = an->shape.rows, c = an->shape.cols;
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += an->value[i * c + j] * an->value[i * c + j];
    out[i] = std::sqrt(s);
  }
  return make("l2_row_norms", {r, 1}, std::move(out), {an}, [r, c](Node& self) {
    Node& x = *self.inputs[0];
    auto& g = grad_of(x);
    for (std::size_t i = 0; i < r; ++i) {
      if (self.value[i] == 0.0) continue;
      const double f = self.grad[i] / self.value[i];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += f * x.value[i * c + j];
    }
  });
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
  const auto& an = checked(a, "pairwise_sq_dist");
  const auto& bn = checked(b, "pairwise_sq_dist");
  if (an->shape.cols != bn->shape.cols) shape_error("pairwise_sq_dist", an->shape, bn->shape);
  const std::size_t m = an->shape.rows, k = bn->shape.rows, d = an->shape.cols;
  std::vector<double> out(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = an->value[i * d + c] - bn->value[j * d + c];
        s += diff * diff;
      }
      out[i * k + j] = s;
    }
  return make("pairwise_sq_dist", {m, k}, std::move(out), {an, bn}, [m, k, d](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    std::vector<double>* gx = x.requires_grad ? &grad_of(x) : nullptr;
    std::vector<double>* gy = y.requires_grad ? &grad_of(y) : nullptr;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double g2 = 2.0 * self.grad[i * k + j];
        if (g2 == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = x.value[i * d + c] - y.value[j * d + c];
          if (gx) (*gx)[i * d + c] += g2 * diff;
          if (gy) (*gy)[j * d + c] -= g2 * diff;
        }
      }
  });
}

Tensor& ParameterSet::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (contains(name)) throw ContractError("ParameterSet: duplicate parameter " + name);
  entries_.emplace_back(name, Tensor::parameter(shape, std::move(values)));
  return entries_.back().second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ContractError("ParameterSet: no parameter named " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.shape().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet copy;
  for (const auto& [name, t] : entries_) {
    copy.add(name, t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  }
  return copy;
}

Checkpoint ParameterSet::snapshot() const {
  Checkpoint ckpt;
  for (const auto& [name, t] : entries_) {
    ckpt[name] = TensorData{t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
  }
  return ckpt;
}

void ParameterSet::load(const Checkpoint& ckpt) {
  for (auto& [name, t] : entries_) {
    auto it = ckpt.find(name);
    if (it == ckpt.end()) throw DataError("incompatible checkpoint: missing parameter " + name);
    if (!(it->second.shape == t.shape())) {
      throw DataError("incompatible checkpoint: parameter " + name + " expects shape " + t.shape().str() +
                      " but checkpoint holds " + it->second.shape.str());
    }
    auto dst = t.mutable_values();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

}  // namespace bfg::ag
