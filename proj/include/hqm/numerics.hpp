#pragma once

// Dense double-precision tensors with tape-based reverse-mode
// differentiation. Only the operations the decoder, heads and losses need.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hqm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class GradientTape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  /// Writable storage. Only legal on tensors not recorded on a tape.
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return tape_ != nullptr; }
  GradientTape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Same values, no tape participation.
  Tensor detached() const { return Tensor(shape_, data_); }

 private:
  friend class GradientTape;

  Shape shape_;
  std::vector<double> data_;
  GradientTape* tape_ = nullptr;
  int node_ = -1;
};

/// Gradient buffers produced by one backward sweep.
class Gradients {
 public:
  /// Gradient w.r.t. a tensor recorded on the tape. Tensors that the root
  /// does not depend on (or that are untracked) get zeros.
  Tensor of(const Tensor& t) const;

 private:
  friend class GradientTape;
  std::vector<std::vector<double>> per_node_;
  const GradientTape* tape_ = nullptr;
};

// Records operations in execution order; parents always precede children.
// A tape belongs to one thread of execution and must outlive the tensors
// recorded on it.
class GradientTape {
 public:
  /// Receives the output gradient and one accumulator per input; the
  /// accumulator is null for inputs that are not tracked.
  using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> input_grads)>;

  GradientTape() = default;
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  /// Registers `leaf` as a differentiable input and returns the tracked copy.
  Tensor watch(const Tensor& leaf);

  /// Records a custom operation. When no input is tracked the result is a
  /// plain tensor and nothing is recorded.
  static Tensor record(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs, BackwardFn backward);
  static Tensor record(Shape shape, std::vector<double> value, std::span<const Tensor* const> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar root.
  Gradients backward(const Tensor& root) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::size_t size = 0;
    std::vector<int> parents;
    BackwardFn backward;
  };

  int push(Node node);

  std::vector<Node> nodes_;
};

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

enum class Elementwise { add, sub, mul, tanh, relu, sigmoid, scale };

/// Unary kinds ignore `b`; `scale` multiplies `a` by `factor`.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor* b = nullptr, double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// x[m×n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
/// x W + b.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor softmax_rows(const Tensor& x);
/// Per-row standardization followed by gain/bias (both length n).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- verification ----------------------------------------------------------

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  /// Max relative error per parameter tensor, in input order.
  std::vector<double> per_param;
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences. `f` must be deterministic; it is called once with tracked
/// parameters and twice per element with plain ones. Relative error is
/// |analytic - numeric| / max(1e-8, |numeric|).
FiniteDiffReport finite_diff_check(const std::function<Tensor(std::span<const Tensor>)>& f, std::vector<Tensor> params, double eps = 1e-6);

}  // namespace hqm
