#include "hqm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hqm/errors.hpp"

namespace hqm {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) { return Tensor({values.size()}, std::vector<double>(values)); }

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw ShapeError("rows() needs a matrix, got " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw ShapeError("cols() needs a matrix, got " + shape_str(shape_));
  return shape_[1];
}

std::span<double> Tensor::mutable_data() {
  if (tape_ != nullptr) throw ContractError("cannot mutate a tensor recorded on a tape");
  return data_;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() needs a single-element tensor, got " + shape_str(shape_));
  return data_[0];
}

// ---- tape ------------------------------------------------------------------

int GradientTape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor GradientTape::watch(const Tensor& leaf) {
  Tensor out(leaf.shape_, leaf.data_);
  out.tape_ = this;
  out.node_ = push(Node{leaf.size(), {}, nullptr});
  return out;
}

Tensor GradientTape::record(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  return record(std::move(shape), std::move(value), std::span<const Tensor* const>(inputs.begin(), inputs.size()), std::move(backward));
}

Tensor GradientTape::record(Shape shape, std::vector<double> value, std::span<const Tensor* const> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(value));
  GradientTape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (in->tape_ == nullptr) continue;
    if (tape != nullptr && tape != in->tape_) throw ContractError("operation mixes tensors from different tapes");
    tape = in->tape_;
  }
  if (tape == nullptr) return out;
  Node node;
  node.size = out.size();
  node.backward = std::move(backward);
  for (const Tensor* in : inputs) node.parents.push_back(in->tape_ ? in->node_ : -1);
  out.tape_ = tape;
  out.node_ = tape->push(std::move(node));
  return out;
}

Gradients GradientTape::backward(const Tensor& root) const {
  if (root.size() != 1) throw ContractError("backward needs a scalar root, got " + shape_str(root.shape()));
  if (root.tape_ != this) throw ContractError("backward root is not recorded on this tape");

  Gradients grads;
  grads.tape_ = this;
  grads.per_node_.resize(nodes_.size());
  grads.per_node_[root.node_].assign(1, 1.0);

  std::vector<std::vector<double>*> input_grads;
  for (int i = root.node_; i >= 0; --i) {
    const Node& node = nodes_[i];
    if (!node.backward || grads.per_node_[i].empty()) continue;
    input_grads.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const int parent = node.parents[p];
      if (parent < 0) continue;
      auto& buf = grads.per_node_[parent];
      if (buf.empty()) buf.assign(nodes_[parent].size, 0.0);
      input_grads[p] = &buf;
    }
    node.backward(grads.per_node_[i], input_grads);
    // Interior buffers are no longer needed once propagated.
    if (!node.parents.empty()) std::vector<double>().swap(grads.per_node_[i]);
  }
  return grads;
}

Tensor Gradients::of(const Tensor& t) const {
  if (t.tape() == nullptr || t.tape() != tape_) return Tensor::zeros(t.shape());
  const auto& buf = per_node_[t.node()];
  if (buf.empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), buf);
}

// ---- operations ------------------------------------------------------------

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " expects a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// out[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

std::vector<double> copy_if_tracked(const Tensor& source, const Tensor& other) {
  // Local gradient of one input needs the other input's values.
  return other.requires_grad() ? std::vector<double>(source.data().begin(), source.data().end()) : std::vector<double>{};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto a_vals = copy_if_tracked(a, b);
  auto b_vals = copy_if_tracked(b, a);
  return GradientTape::record({m, n}, std::move(out), {&a, &b},
                              [a_vals = std::move(a_vals), b_vals = std::move(b_vals), m, k, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
                                if (in[0]) gemm_nt(g.data(), b_vals.data(), in[0]->data(), m, n, k);
                                if (in[1]) gemm_tn(a_vals.data(), g.data(), in[1]->data(), m, k, n);
                              });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "ᵀ");
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto a_vals = copy_if_tracked(a, b);
  auto b_vals = copy_if_tracked(b, a);
  return GradientTape::record({m, n}, std::move(out), {&a, &b},
                              [a_vals = std::move(a_vals), b_vals = std::move(b_vals), m, k, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
                                // dA = G B, dB = Gᵀ A
                                if (in[0]) gemm_nn(g.data(), b_vals.data(), in[0]->data(), m, n, k);
                                if (in[1]) gemm_tn(g.data(), a_vals.data(), in[1]->data(), m, n, k);
                              });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  return GradientTape::record({n, m}, std::move(out), {&a}, [m, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
    auto& da = *in[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
  });
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor* b, double factor) {
  const auto av = a.data();
  const std::size_t n = a.size();
  std::vector<double> out(n);

  const bool binary = kind == Elementwise::add || kind == Elementwise::sub || kind == Elementwise::mul;
  if (binary) {
    if (b == nullptr) throw ContractError("binary elementwise operation needs two operands");
    require_same_shape(a, *b, "elementwise");
    const auto bv = b->data();
    switch (kind) {
      case Elementwise::add:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
        return GradientTape::record(a.shape(), std::move(out), {&a, b}, [](std::span<const double> g, std::span<std::vector<double>* const> in) {
          for (auto* d : in)
            if (d)
              for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
        });
      case Elementwise::sub:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
        return GradientTape::record(a.shape(), std::move(out), {&a, b}, [](std::span<const double> g, std::span<std::vector<double>* const> in) {
          if (in[0])
            for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
          if (in[1])
            for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] -= g[i];
        });
      default: {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
        auto a_vals = copy_if_tracked(a, *b);
        auto b_vals = copy_if_tracked(*b, a);
        return GradientTape::record(a.shape(), std::move(out), {&a, b},
                                    [a_vals = std::move(a_vals), b_vals = std::move(b_vals)](std::span<const double> g, std::span<std::vector<double>* const> in) {
                                      if (in[0])
                                        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * b_vals[i];
                                      if (in[1])
                                        for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] += g[i] * a_vals[i];
                                    });
      }
    }
  }

  switch (kind) {
    case Elementwise::scale:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * factor;
      return GradientTape::record(a.shape(), std::move(out), {&a}, [factor](std::span<const double> g, std::span<std::vector<double>* const> in) {
        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * factor;
      });
    case Elementwise::tanh: {
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(av[i]);
      std::vector<double> y = out;
      return GradientTape::record(a.shape(), std::move(out), {&a}, [y = std::move(y)](std::span<const double> g, std::span<std::vector<double>* const> in) {
        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * (1.0 - y[i] * y[i]);
      });
    }
    case Elementwise::relu: {
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
      std::vector<double> y = out;
      return GradientTape::record(a.shape(), std::move(out), {&a}, [y = std::move(y)](std::span<const double> g, std::span<std::vector<double>* const> in) {
        for (std::size_t i = 0; i < g.size(); ++i)
          if (y[i] > 0.0) (*in[0])[i] += g[i];
      });
    }
    case Elementwise::sigmoid: {
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-av[i])) : std::exp(av[i]) / (1.0 + std::exp(av[i]));
      std::vector<double> y = out;
      return GradientTape::record(a.shape(), std::move(out), {&a}, [y = std::move(y)](std::span<const double> g, std::span<std::vector<double>* const> in) {
        for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * y[i] * (1.0 - y[i]);
      });
    }
    default:
      throw ContractError("unary elementwise operation given an unexpected kind");
  }
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::add, a, &b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::sub, a, &b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::mul, a, &b); }
Tensor scale(const Tensor& a, double factor) { return elementwise(Elementwise::scale, a, nullptr, factor); }
Tensor tanh(const Tensor& a) { return elementwise(Elementwise::tanh, a); }
Tensor relu(const Tensor& a) { return elementwise(Elementwise::relu, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(Elementwise::sigmoid, a); }

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) throw ShapeError("bias of size " + std::to_string(bias.size()) + " for " + std::to_string(n) + " columns");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  return GradientTape::record({m, n}, std::move(out), {&x, &bias}, [m, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
    if (in[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
    if (in[1])
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*in[1])[j] += g[i * n + j];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row_bias(matmul(x, w), b); }

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    const double top = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[i * n + j] = std::exp(row[j] - top);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  std::vector<double> y = x.requires_grad() ? out : std::vector<double>{};
  return GradientTape::record({m, n}, std::move(out), {&x}, [y = std::move(y), m, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
    auto& dx = *in[0];
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) throw ShapeError("layer_norm_rows: gain/bias length must equal column count");
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv[i * n + j] - mu) * (xv[i * n + j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gain[j] + bias[j];
    }
  }
  std::vector<double> g_vals(gain.data().begin(), gain.data().end());
  return GradientTape::record({m, n}, std::move(out), {&x, &gain, &bias},
                              [xhat = std::move(xhat), inv_std = std::move(inv_std), g_vals = std::move(g_vals), m, n](std::span<const double> g,
                                                                                                                      std::span<std::vector<double>* const> in) {
                                const double nn = static_cast<double>(n);
                                for (std::size_t i = 0; i < m; ++i) {
                                  const double* gr = g.data() + i * n;
                                  const double* xh = xhat.data() + i * n;
                                  if (in[1])
                                    for (std::size_t j = 0; j < n; ++j) (*in[1])[j] += gr[j] * xh[j];
                                  if (in[2])
                                    for (std::size_t j = 0; j < n; ++j) (*in[2])[j] += gr[j];
                                  if (!in[0]) continue;
                                  double s1 = 0.0, s2 = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                    const double dxh = gr[j] * g_vals[j];
                                    s1 += dxh;
                                    s2 += dxh * xh[j];
                                  }
                                  for (std::size_t j = 0; j < n; ++j) {
                                    const double dxh = gr[j] * g_vals[j];
                                    (*in[0])[i * n + j] += inv_std[i] * (dxh - s1 / nn - xh[j] * s2 / nn);
                                  }
                                }
                              });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin > end || end > n) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i, begin + j);
  return GradientTape::record({m, w}, std::move(out), {&x}, [m, n, w, begin](std::span<const double> g, std::span<std::vector<double>* const> in) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) (*in[0])[i * n + begin + j] += g[i * w + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets, widths;
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(n);
    widths.push_back(p.cols());
    inputs.push_back(&p);
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * n + offsets[k] + j] = parts[k].at(i, j);
  return GradientTape::record({m, n}, std::move(out), inputs,
                              [offsets = std::move(offsets), widths = std::move(widths), m, n](std::span<const double> g, std::span<std::vector<double>* const> in) {
                                for (std::size_t k = 0; k < in.size(); ++k) {
                                  if (!in[k]) continue;
                                  for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t j = 0; j < widths[k]; ++j) (*in[k])[i * widths[k] + j] += g[i * n + offsets[k] + j];
                                }
                              });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t n = x.cols(), m_src = x.rows();
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m_src) throw ShapeError("gather_rows: row index out of range");
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x.at(rows[r], j);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return GradientTape::record({rows.size(), n}, std::move(out), {&x}, [idx = std::move(idx), n](std::span<const double> g, std::span<std::vector<double>* const> in) {
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) (*in[0])[idx[r] * n + j] += g[r * n + j];
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return GradientTape::record({}, {total}, {&x}, [](std::span<const double> g, std::span<std::vector<double>* const> in) {
    for (auto& v : *in[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// ---- verification ----------------------------------------------------------

FiniteDiffReport finite_diff_check(const std::function<Tensor(std::span<const Tensor>)>& f, std::vector<Tensor> params, double eps) {
  for (auto& p : params) p = p.detached();

  std::vector<Tensor> analytic;
  {
    GradientTape tape;
    std::vector<Tensor> tracked;
    tracked.reserve(params.size());
    for (const auto& p : params) tracked.push_back(tape.watch(p));
    const Tensor out = f(tracked);
    if (!out.requires_grad()) {
      for (const auto& p : params) analytic.push_back(Tensor::zeros(p.shape()));
    } else {
      const Gradients grads = tape.backward(out);
      for (const auto& t : tracked) analytic.push_back(grads.of(t));
    }
  }

  FiniteDiffReport report;
  report.per_param.assign(params.size(), 0.0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double original = params[k][i];
      params[k].mutable_data()[i] = original + eps;
      const double up = f(params).item();
      params[k].mutable_data()[i] = original - eps;
      const double down = f(params).item();
      params[k].mutable_data()[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1e-8, std::abs(numeric));
      report.per_param[k] = std::max(report.per_param[k], err);
    }
    report.max_rel_error = std::max(report.max_rel_error, report.per_param[k]);
  }
  return report;
}

}  // namespace hqm
