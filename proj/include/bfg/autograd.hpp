#pragma once

// Reverse-mode differentiation over dense row-major matrices of doubles.
//
// A Tensor is a cheap handle onto a node of the computation graph. Every
// operation below builds a new node that remembers its inputs, so the graph
// from the parameters to a scalar loss is recorded implicitly while the
// forward pass runs. backward() walks that record once in reverse
// topological order and accumulates gradients into every leaf that
// requires them.
//
// All tensors are rank 2; vectors are 1xD or Nx1 and scalars are 1x1.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bfg::ag {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);
  // A leaf whose gradient is accumulated by backward().
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }

  std::span<const double> values() const;
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  // Zero-filled when nothing has been accumulated yet.
  std::span<const double> grad() const;
  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;

  // Leaf-only mutation, used by optimizers between graph constructions.
  std::span<double> mutable_values();
  void zero_grad();

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Runs reverse accumulation from a 1x1 loss. A given loss may be
// back-propagated only once.
void backward(const Tensor& loss);

// Same values, no gradient path.
Tensor stop_gradient(const Tensor& t);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise arithmetic. Operands of different shapes are broadcast when one
// of them is 1x1, 1xC or Rx1 against the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor negate(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Gradient at exactly zero is taken as zero (subgradient of a norm).
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lower);
// Elementwise maximum; ties route the gradient to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);

// axis 0 reduces over rows (result 1xC); axis 1 over columns (result Rx1).
Tensor max_over_axis(const Tensor& a, int axis);
Tensor sum_over_axis(const Tensor& a, int axis);
Tensor softmax_over_axis(const Tensor& a, int axis);
Tensor log_softmax_over_axis(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
// Row-wise mean per bin; every bin must receive at least one row.
Tensor scatter_mean(const Tensor& a, std::span<const std::size_t> bins, std::size_t n_bins);
Tensor broadcast(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor l2_row_norms(const Tensor& a);
// out(i, j) = sum_c (a(i, c) - b(j, c))^2
Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b);

// Plain value snapshot of a tensor, as stored in checkpoints.
struct TensorData {
  Shape shape;
  std::vector<double> values;
};

using Checkpoint = std::map<std::string, TensorData>;

// Binary container; layout documented in docs/checkpoint.md.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Named trainable leaves in insertion order.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::span<const std::pair<std::string, Tensor>> entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();
  // Deep copy with fresh leaves (read-only snapshots for concurrent use).
  ParameterSet clone() const;

  Checkpoint snapshot() const;
  // Copies values in; every parameter must be present with a matching shape.
  void load(const Checkpoint& ckpt);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace bfg::ag
