#include "rdt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "rdt/error.hpp"

namespace rdt {

namespace {

std::atomic<std::uint64_t> g_seq{0};

std::size_t checked_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

const detail::TensorNode& deref(const Tensor& t, const char* what) {
  if (!t.valid()) throw ContractError(std::string(what) + ": empty tensor");
  return *t.node();
}

double phi_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double phi_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

}  // namespace

namespace detail {

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void TensorNode::accumulate(const std::vector<double>& g) {
  if (g.size() != data.size())
    throw ContractError("gradient size mismatch during accumulation");
  auto& dst = ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Construction

static std::shared_ptr<detail::TensorNode> new_node(std::vector<int> shape,
                                                    std::vector<double> data,
                                                    bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed) + 1;
  return node;
}

Tensor make_op_result(std::vector<int> shape, std::vector<double> data,
                      std::span<const Tensor> inputs,
                      std::function<void(detail::TensorNode&)> fn) {
  bool rg = false;
  for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  auto node = new_node(std::move(shape), std::move(data), rg);
  if (rg) {
    for (const Tensor& t : inputs)
      if (t.requires_grad()) node->parents.push_back(t.node());
    node->backprop = std::move(fn);
  }
  return Tensor(std::move(node));
}

static Tensor op_result(std::vector<int> shape, std::vector<double> data,
                        std::initializer_list<Tensor> inputs,
                        std::function<void(detail::TensorNode&)> fn) {
  std::vector<Tensor> in(inputs);
  return make_op_result(std::move(shape), std::move(data),
                        std::span<const Tensor>(in), std::move(fn));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::size_t n = checked_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  std::size_t n = checked_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value),
                         requires_grad));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  std::size_t n = checked_size(shape);
  if (n != data.size())
    throw ShapeError("from_data: " + shape_str(shape) + " wants " +
                     std::to_string(n) + " values, got " +
                     std::to_string(data.size()));
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

// ---------------------------------------------------------------------------
// Accessors

const std::vector<int>& Tensor::shape() const {
  return deref(*this, "shape").shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  return s[axis];
}

std::size_t Tensor::size() const { return deref(*this, "size").data.size(); }

const std::vector<double>& Tensor::data() const {
  return deref(*this, "data").data;
}

std::vector<double>& Tensor::mutable_data() {
  if (!node_) throw ContractError("mutable_data: empty tensor");
  return node_->data;
}

double Tensor::at(std::size_t flat_index) const {
  const auto& d = data();
  if (flat_index >= d.size())
    throw ShapeError("at: index " + std::to_string(flat_index) +
                     " out of range (size " + std::to_string(d.size()) + ")");
  return d[flat_index];
}

double Tensor::item() const {
  const auto& d = data();
  if (d.size() != 1)
    throw ContractError("item: tensor " + shape_str(shape()) + " is not scalar");
  return d[0];
}

bool Tensor::requires_grad() const {
  return deref(*this, "requires_grad").requires_grad;
}

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("set_requires_grad: empty tensor");
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return !deref(*this, "has_grad").grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  const auto& n = deref(*this, "grad");
  if (n.grad.empty())
    throw ContractError("grad: no gradient accumulated for tensor " +
                        shape_str(n.shape));
  return n.grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

static void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  auto na = a.node();
  auto nb = b.node();
  return op_result(a.shape(), std::move(out), {a, b},
                   [na, nb](detail::TensorNode& self) {
                     if (na->requires_grad) na->accumulate(self.grad);
                     if (nb->requires_grad) nb->accumulate(self.grad);
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  auto na = a.node();
  auto nb = b.node();
  return op_result(a.shape(), std::move(out), {a, b},
                   [na, nb](detail::TensorNode& self) {
                     if (na->requires_grad) na->accumulate(self.grad);
                     if (nb->requires_grad) {
                       auto& g = nb->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] -= self.grad[i];
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  auto na = a.node();
  auto nb = b.node();
  return op_result(a.shape(), std::move(out), {a, b},
                   [na, nb](detail::TensorNode& self) {
                     if (na->requires_grad) {
                       auto& g = na->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * nb->data[i];
                     }
                     if (nb->requires_grad) {
                       auto& g = nb->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * na->data[i];
                     }
                   });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  const auto& dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] * c;
  auto nx = x.node();
  return op_result(x.shape(), std::move(out), {x},
                   [nx, c](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       g[i] += self.grad[i] * c;
                   });
}

Tensor add_const(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  const auto& dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] + c;
  auto nx = x.node();
  return op_result(x.shape(), std::move(out), {x},
                   [nx](detail::TensorNode& self) { nx->accumulate(self.grad); });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int m = a.dim(0);
  const int k = a.dim(1);
  const int n = b.dim(1);
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = da[static_cast<std::size_t>(i) * k + p];
      const double* brow = &db[static_cast<std::size_t>(p) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  auto na = a.node();
  auto nb = b.node();
  return op_result(
      {m, n}, std::move(out), {a, b},
      [na, nb, m, k, n](detail::TensorNode& self) {
        const auto& g = self.grad;
        if (na->requires_grad) {
          auto& ga = na->ensure_grad();
          // dA = G * B^T
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* grow = &g[static_cast<std::size_t>(i) * n];
              const double* brow = &nb->data[static_cast<std::size_t>(p) * n];
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[static_cast<std::size_t>(i) * k + p] += acc;
            }
        }
        if (nb->requires_grad) {
          auto& gb = nb->ensure_grad();
          // dB = A^T * G
          for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i) {
              const double av = na->data[static_cast<std::size_t>(i) * k + p];
              const double* grow = &g[static_cast<std::size_t>(i) * n];
              double* gbrow = &gb[static_cast<std::size_t>(p) * n];
              for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
        }
      });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw ShapeError("transpose: expected 2-D, got " + shape_str(x.shape()));
  const int r = x.dim(0);
  const int c = x.dim(1);
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j) * r + i] =
          dx[static_cast<std::size_t>(i) * c + j];
  auto nx = x.node();
  return op_result({c, r}, std::move(out), {x},
                   [nx, r, c](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (int i = 0; i < r; ++i)
                       for (int j = 0; j < c; ++j)
                         g[static_cast<std::size_t>(i) * c + j] +=
                             self.grad[static_cast<std::size_t>(j) * r + i];
                   });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
    throw ShapeError("add_rowwise: incompatible shapes " +
                     shape_str(m.shape()) + " + " + shape_str(v.shape()));
  const int rows = m.dim(0);
  const int cols = m.dim(1);
  const auto& dm = m.data();
  const auto& dv = v.data();
  std::vector<double> out(dm.size());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(i) * cols + j] =
          dm[static_cast<std::size_t>(i) * cols + j] + dv[j];
  auto nm = m.node();
  auto nv = v.node();
  return op_result({rows, cols}, std::move(out), {m, v},
                   [nm, nv, rows, cols](detail::TensorNode& self) {
                     if (nm->requires_grad) nm->accumulate(self.grad);
                     if (nv->requires_grad) {
                       auto& g = nv->ensure_grad();
                       for (int i = 0; i < rows; ++i)
                         for (int j = 0; j < cols; ++j)
                           g[j] += self.grad[static_cast<std::size_t>(i) * cols + j];
                     }
                   });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1)
    throw ShapeError("softmax_rows: expected rank >= 1, got " +
                     shape_str(x.shape()));
  const int cols = x.shape().back();
  const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &dx[r * cols];
    double* o = &out[r * cols];
    double mx = in[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    for (int j = 0; j < cols; ++j) o[j] /= denom;
  }
  auto nx = x.node();
  return op_result(x.shape(), std::move(out), {x},
                   [nx, rows, cols](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* s = &self.data[r * cols];
                       const double* go = &self.grad[r * cols];
                       double dot = 0.0;
                       for (int j = 0; j < cols; ++j) dot += go[j] * s[j];
                       for (int j = 0; j < cols; ++j)
                         g[r * cols + j] += s[j] * (go[j] - dot);
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() < 1)
    throw ShapeError("layer_norm: expected rank >= 1, got " +
                     shape_str(x.shape()));
  const int cols = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 ||
      bias.dim(0) != cols)
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match last dim of " +
                     shape_str(x.shape()));
  const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
  const auto& dx = x.data();
  const auto& dg = gain.data();
  const auto& db = bias.data();
  std::vector<double> out(dx.size());
  // Cache per-row inverse stddev and standardized values for the backward
  // pass (recomputing them from data would repeat the reductions).
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto xhat = std::make_shared<std::vector<double>>(dx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &dx[r * cols];
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += in[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (int j = 0; j < cols; ++j) {
      const double h = (in[j] - mean) * inv;
      (*xhat)[r * cols + j] = h;
      out[r * cols + j] = dg[j] * h + db[j];
    }
  }
  auto nx = x.node();
  auto ng = gain.node();
  auto nb = bias.node();
  return op_result(
      x.shape(), std::move(out), {x, gain, bias},
      [nx, ng, nb, rows, cols, inv_std, xhat](detail::TensorNode& self) {
        const auto& go = self.grad;
        if (ng->requires_grad) {
          auto& g = ng->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j)
              g[j] += go[r * cols + j] * (*xhat)[r * cols + j];
        }
        if (nb->requires_grad) {
          auto& g = nb->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j) g[j] += go[r * cols + j];
        }
        if (nx->requires_grad) {
          auto& g = nx->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_h = 0.0;
            double mean_hx = 0.0;
            for (int j = 0; j < cols; ++j) {
              const double h = go[r * cols + j] * ng->data[j];
              mean_h += h;
              mean_hx += h * (*xhat)[r * cols + j];
            }
            mean_h /= cols;
            mean_hx /= cols;
            const double inv = (*inv_std)[r];
            for (int j = 0; j < cols; ++j) {
              const double h = go[r * cols + j] * ng->data[j];
              g[r * cols + j] +=
                  inv * (h - mean_h - (*xhat)[r * cols + j] * mean_hx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Tensor activation(const Tensor& x, Act kind) {
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  switch (kind) {
    case Act::sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-dx[i]));
      break;
    case Act::relu:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = dx[i] > 0.0 ? dx[i] : 0.0;
      break;
    case Act::gelu:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = dx[i] * phi_cdf(dx[i]);
      break;
  }
  auto nx = x.node();
  return op_result(
      x.shape(), std::move(out), {x}, [nx, kind](detail::TensorNode& self) {
        auto& g = nx->ensure_grad();
        switch (kind) {
          case Act::sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i) {
              const double s = self.data[i];
              g[i] += self.grad[i] * s * (1.0 - s);
            }
            break;
          case Act::relu:
            for (std::size_t i = 0; i < g.size(); ++i)
              if (nx->data[i] > 0.0) g[i] += self.grad[i];
            break;
          case Act::gelu:
            for (std::size_t i = 0; i < g.size(); ++i) {
              const double v = nx->data[i];
              g[i] += self.grad[i] * (phi_cdf(v) + v * phi_pdf(v));
            }
            break;
        }
      });
}

Tensor sigmoid(const Tensor& x) { return activation(x, Act::sigmoid); }
Tensor relu(const Tensor& x) { return activation(x, Act::relu); }
Tensor gelu(const Tensor& x) { return activation(x, Act::gelu); }

Tensor log_elem(const Tensor& x) {
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (dx[i] <= 0.0)
      throw DomainError("log_elem: non-positive input " + std::to_string(dx[i]));
    out[i] = std::log(dx[i]);
  }
  auto nx = x.node();
  return op_result(x.shape(), std::move(out), {x},
                   [nx](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       g[i] += self.grad[i] / nx->data[i];
                   });
}

Tensor pow_const(const Tensor& x, double p) {
  const auto& dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (dx[i] < 0.0)
      throw DomainError("pow_const: negative base " + std::to_string(dx[i]));
    out[i] = std::pow(dx[i], p);
  }
  auto nx = x.node();
  return op_result(x.shape(), std::move(out), {x},
                   [nx, p](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double v = nx->data[i];
                       double d;
                       if (p == 0.0) d = 0.0;
                       else if (p == 1.0) d = 1.0;
                       else if (v == 0.0) d = 0.0;
                       else d = p * std::pow(v, p - 1.0);
                       g[i] += self.grad[i] * d;
                     }
                   });
}

// ---------------------------------------------------------------------------
// Shape surgery

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  std::size_t n = checked_size(shape);
  if (n != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  auto nx = x.node();
  return op_result(std::move(shape), x.data(), {x},
                   [nx](detail::TensorNode& self) { nx->accumulate(self.grad); });
}

Tensor concat_last(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_last: no inputs");
  std::vector<int> lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
  int total_last = 0;
  std::vector<int> lasts;
  for (const Tensor& t : xs) {
    if (t.rank() < 1) throw ShapeError("concat_last: rank-0 input");
    std::vector<int> l(t.shape().begin(), t.shape().end() - 1);
    if (l != lead)
      throw ShapeError("concat_last: leading dims differ: " +
                       shape_str(xs[0].shape()) + " vs " + shape_str(t.shape()));
    lasts.push_back(t.shape().back());
    total_last += t.shape().back();
  }
  std::size_t rows = 1;
  for (int d : lead) rows *= static_cast<std::size_t>(d);
  std::vector<double> out(rows * static_cast<std::size_t>(total_last));
  int offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& d = xs[k].data();
    const int lk = lasts[k];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&d[r * lk], lk, &out[r * total_last + offset]);
    offset += lk;
  }
  std::vector<int> out_shape = lead;
  out_shape.push_back(total_last);
  std::vector<std::shared_ptr<detail::TensorNode>> nodes;
  for (const Tensor& t : xs) nodes.push_back(t.node());
  return make_op_result(
      std::move(out_shape), std::move(out), xs,
      [nodes, lasts, rows, total_last](detail::TensorNode& self) {
        int off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const int lk = lasts[k];
          if (nodes[k]->requires_grad) {
            auto& g = nodes[k]->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (int j = 0; j < lk; ++j)
                g[r * lk + j] += self.grad[r * total_last + off + j];
          }
          off += lk;
        }
      });
}

Tensor slice_last(const Tensor& x, int start, int len) {
  if (x.rank() < 1)
    throw ShapeError("slice_last: rank-0 input");
  const int cols = x.shape().back();
  if (start < 0 || len <= 0 || start + len > cols)
    throw ShapeError("slice_last: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of " +
                     std::to_string(cols));
  const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
  const auto& dx = x.data();
  std::vector<double> out(rows * static_cast<std::size_t>(len));
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(&dx[r * cols + start], len, &out[r * len]);
  std::vector<int> out_shape = x.shape();
  out_shape.back() = len;
  auto nx = x.node();
  return op_result(std::move(out_shape), std::move(out), {x},
                   [nx, start, len, cols, rows](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (int j = 0; j < len; ++j)
                         g[r * cols + start + j] += self.grad[r * len + j];
                   });
}

Tensor concat_rows(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_rows: no inputs");
  auto cols_of = [](const Tensor& t) -> int {
    if (t.rank() == 1) return t.dim(0);
    if (t.rank() == 2) return t.dim(1);
    throw ShapeError("concat_rows: expected 1-D or 2-D, got " +
                     shape_str(t.shape()));
  };
  auto rows_of = [](const Tensor& t) -> int {
    return t.rank() == 1 ? 1 : t.dim(0);
  };
  const int cols = cols_of(xs[0]);
  int total_rows = 0;
  for (const Tensor& t : xs) {
    if (cols_of(t) != cols)
      throw ShapeError("concat_rows: column mismatch " +
                       shape_str(xs[0].shape()) + " vs " + shape_str(t.shape()));
    total_rows += rows_of(t);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total_rows) * cols);
  for (const Tensor& t : xs)
    out.insert(out.end(), t.data().begin(), t.data().end());
  std::vector<std::shared_ptr<detail::TensorNode>> nodes;
  std::vector<std::size_t> sizes;
  for (const Tensor& t : xs) {
    nodes.push_back(t.node());
    sizes.push_back(t.size());
  }
  return make_op_result(
      {total_rows, cols}, std::move(out), xs,
      [nodes, sizes](detail::TensorNode& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          if (nodes[k]->requires_grad) {
            auto& g = nodes[k]->ensure_grad();
            for (std::size_t i = 0; i < sizes[k]; ++i)
              g[i] += self.grad[off + i];
          }
          off += sizes[k];
        }
      });
}

Tensor row(const Tensor& x, int index) {
  if (x.rank() != 2)
    throw ShapeError("row: expected 2-D, got " + shape_str(x.shape()));
  const int rows = x.dim(0);
  const int cols = x.dim(1);
  if (index < 0 || index >= rows)
    throw ShapeError("row: index " + std::to_string(index) + " out of " +
                     std::to_string(rows));
  const auto& dx = x.data();
  std::vector<double> out(dx.begin() + static_cast<std::size_t>(index) * cols,
                          dx.begin() + static_cast<std::size_t>(index + 1) * cols);
  auto nx = x.node();
  return op_result({cols}, std::move(out), {x},
                   [nx, index, cols](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (int j = 0; j < cols; ++j)
                       g[static_cast<std::size_t>(index) * cols + j] +=
                           self.grad[j];
                   });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum_all(const Tensor& x) {
  const auto& dx = x.data();
  double acc = 0.0;
  for (double v : dx) acc += v;
  auto nx = x.node();
  return op_result({1}, {acc}, {x}, [nx](detail::TensorNode& self) {
    auto& g = nx->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  const auto& dx = x.data();
  double acc = 0.0;
  for (double v : dx) acc += v;
  const double inv = 1.0 / static_cast<double>(dx.size());
  auto nx = x.node();
  return op_result({1}, {acc * inv}, {x}, [nx, inv](detail::TensorNode& self) {
    auto& g = nx->ensure_grad();
    for (double& v : g) v += self.grad[0] * inv;
  });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rank() != 2)
    throw ShapeError("mean_rows: expected 2-D, got " + shape_str(x.shape()));
  const int rows = x.dim(0);
  const int cols = x.dim(1);
  const auto& dx = x.data();
  std::vector<double> out(cols, 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[j] += dx[static_cast<std::size_t>(i) * cols + j];
  const double inv = 1.0 / rows;
  for (double& v : out) v *= inv;
  auto nx = x.node();
  return op_result({cols}, std::move(out), {x},
                   [nx, rows, cols, inv](detail::TensorNode& self) {
                     auto& g = nx->ensure_grad();
                     for (int i = 0; i < rows; ++i)
                       for (int j = 0; j < cols; ++j)
                         g[static_cast<std::size_t>(i) * cols + j] +=
                             self.grad[j] * inv;
                   });
}

// ---------------------------------------------------------------------------
// Image ops (H x W x C layout)

static void check_image(const Tensor& t, const char* op) {
  if (t.rank() != 3)
    throw ShapeError(std::string(op) + ": expected H x W x C, got " +
                     shape_str(t.shape()));
}

Tensor conv2d(const Tensor& image, const Tensor& kernel, const Tensor& bias) {
  check_image(image, "conv2d");
  if (kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be [kh, kw, in_c, out_c], got " +
                     shape_str(kernel.shape()));
  const int h = image.dim(0);
  const int w = image.dim(1);
  const int cin = image.dim(2);
  const int kh = kernel.dim(0);
  const int kw = kernel.dim(1);
  const int cout = kernel.dim(3);
  if (kernel.dim(2) != cin)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " does not match image channels " +
                     shape_str(image.shape()));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ShapeError("conv2d: kernel dims must be odd for same padding, got " +
                     shape_str(kernel.shape()));
  if (bias.rank() != 1 || bias.dim(0) != cout)
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) +
                     " does not match out channels " + std::to_string(cout));
  const int py = kh / 2;
  const int px = kw / 2;
  const auto& din = image.data();
  const auto& dk = kernel.data();
  const auto& db = bias.data();
  auto in_at = [&](int y, int x, int c) {
    return din[(static_cast<std::size_t>(y) * w + x) * cin + c];
  };
  auto k_at = [&](int ky, int kx, int ic, int oc) {
    return dk[((static_cast<std::size_t>(ky) * kw + kx) * cin + ic) * cout + oc];
  };
  std::vector<double> out(static_cast<std::size_t>(h) * w * cout);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int oc = 0; oc < cout; ++oc) {
        double acc = db[oc];
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = y + ky - py;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = x + kx - px;
            if (ix < 0 || ix >= w) continue;
            for (int ic = 0; ic < cin; ++ic)
              acc += in_at(iy, ix, ic) * k_at(ky, kx, ic, oc);
          }
        }
        out[(static_cast<std::size_t>(y) * w + x) * cout + oc] = acc;
      }
  auto ni = image.node();
  auto nk = kernel.node();
  auto nb = bias.node();
  return op_result(
      {h, w, cout}, std::move(out), {image, kernel, bias},
      [ni, nk, nb, h, w, cin, kh, kw, cout, py, px](detail::TensorNode& self) {
        const auto& g = self.grad;
        auto g_at = [&](int y, int x, int oc) {
          return g[(static_cast<std::size_t>(y) * w + x) * cout + oc];
        };
        auto kidx = [&](int ky, int kx, int ic, int oc) {
          return ((static_cast<std::size_t>(ky) * kw + kx) * cin + ic) * cout +
                 oc;
        };
        auto iidx = [&](int y, int x, int c) {
          return (static_cast<std::size_t>(y) * w + x) * cin + c;
        };
        if (nb->requires_grad) {
          auto& gb = nb->ensure_grad();
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              for (int oc = 0; oc < cout; ++oc) gb[oc] += g_at(y, x, oc);
        }
        if (nk->requires_grad) {
          auto& gk = nk->ensure_grad();
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = y + ky - py;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = x + kx - px;
                  if (ix < 0 || ix >= w) continue;
                  for (int ic = 0; ic < cin; ++ic) {
                    const double iv = ni->data[iidx(iy, ix, ic)];
                    for (int oc = 0; oc < cout; ++oc)
                      gk[kidx(ky, kx, ic, oc)] += iv * g_at(y, x, oc);
                  }
                }
              }
        }
        if (ni->requires_grad) {
          auto& gi = ni->ensure_grad();
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = y + ky - py;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = x + kx - px;
                  if (ix < 0 || ix >= w) continue;
                  for (int ic = 0; ic < cin; ++ic) {
                    double acc = 0.0;
                    for (int oc = 0; oc < cout; ++oc)
                      acc += nk->data[kidx(ky, kx, ic, oc)] * g_at(y, x, oc);
                    gi[iidx(iy, ix, ic)] += acc;
                  }
                }
              }
        }
      });
}

Tensor avg_pool2(const Tensor& image) {
  check_image(image, "avg_pool2");
  const int h = image.dim(0);
  const int w = image.dim(1);
  const int c = image.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("avg_pool2: spatial dims must be even, got " +
                     shape_str(image.shape()));
  const int oh = h / 2;
  const int ow = w / 2;
  const auto& din = image.data();
  auto iidx = [&](int y, int x, int ch) {
    return (static_cast<std::size_t>(y) * w + x) * c + ch;
  };
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int ch = 0; ch < c; ++ch)
        out[(static_cast<std::size_t>(y) * ow + x) * c + ch] =
            0.25 * (din[iidx(2 * y, 2 * x, ch)] + din[iidx(2 * y, 2 * x + 1, ch)] +
                    din[iidx(2 * y + 1, 2 * x, ch)] +
                    din[iidx(2 * y + 1, 2 * x + 1, ch)]);
  auto ni = image.node();
  return op_result({oh, ow, c}, std::move(out), {image},
                   [ni, oh, ow, w, c](detail::TensorNode& self) {
                     auto& g = ni->ensure_grad();
                     auto iidx = [&](int y, int x, int ch) {
                       return (static_cast<std::size_t>(y) * w + x) * c + ch;
                     };
                     for (int y = 0; y < oh; ++y)
                       for (int x = 0; x < ow; ++x)
                         for (int ch = 0; ch < c; ++ch) {
                           const double v =
                               0.25 * self.grad[(static_cast<std::size_t>(y) * ow +
                                                 x) * c + ch];
                           g[iidx(2 * y, 2 * x, ch)] += v;
                           g[iidx(2 * y, 2 * x + 1, ch)] += v;
                           g[iidx(2 * y + 1, 2 * x, ch)] += v;
                           g[iidx(2 * y + 1, 2 * x + 1, ch)] += v;
                         }
                   });
}

Tensor global_avg_pool(const Tensor& image) {
  check_image(image, "global_avg_pool");
  const int h = image.dim(0);
  const int w = image.dim(1);
  const int c = image.dim(2);
  const auto& din = image.data();
  std::vector<double> out(c, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        out[ch] += din[(static_cast<std::size_t>(y) * w + x) * c + ch];
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (double& v : out) v *= inv;
  auto ni = image.node();
  return op_result({c}, std::move(out), {image},
                   [ni, h, w, c, inv](detail::TensorNode& self) {
                     auto& g = ni->ensure_grad();
                     for (int y = 0; y < h; ++y)
                       for (int x = 0; x < w; ++x)
                         for (int ch = 0; ch < c; ++ch)
                           g[(static_cast<std::size_t>(y) * w + x) * c + ch] +=
                               self.grad[ch] * inv;
                   });
}

Tensor slice_block(const Tensor& image, int y0, int x0, int h, int w) {
  check_image(image, "slice_block");
  const int ih = image.dim(0);
  const int iw = image.dim(1);
  const int c = image.dim(2);
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > ih || x0 + w > iw)
    throw ShapeError("slice_block: window " + std::to_string(h) + "x" +
                     std::to_string(w) + " at (" + std::to_string(y0) + ", " +
                     std::to_string(x0) + ") exceeds " +
                     shape_str(image.shape()));
  const auto& din = image.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y)
    std::copy_n(&din[((static_cast<std::size_t>(y0 + y)) * iw + x0) * c],
                static_cast<std::size_t>(w) * c,
                &out[static_cast<std::size_t>(y) * w * c]);
  auto ni = image.node();
  return op_result({h, w, c}, std::move(out), {image},
                   [ni, y0, x0, h, w, iw, c](detail::TensorNode& self) {
                     auto& g = ni->ensure_grad();
                     for (int y = 0; y < h; ++y) {
                       const std::size_t src =
                           static_cast<std::size_t>(y) * w * c;
                       const std::size_t dst =
                           ((static_cast<std::size_t>(y0 + y)) * iw + x0) * c;
                       for (std::size_t i = 0;
                            i < static_cast<std::size_t>(w) * c; ++i)
                         g[dst + i] += self.grad[src + i];
                     }
                   });
}

// ---------------------------------------------------------------------------
// Backward sweep

void backward(const Tensor& loss) {
  const auto& n = deref(loss, "backward");
  if (n.data.size() != 1)
    throw ContractError("backward: loss must be scalar, got " +
                        shape_str(n.shape));
  if (!n.requires_grad) return;

  // Collect every grad-requiring node reachable from the loss.
  std::vector<detail::TensorNode*> order;
  std::vector<detail::TensorNode*> stack{loss.node().get()};
  // Visited set keyed by node address; sequence ids give the replay order.
  std::vector<detail::TensorNode*> seen;
  auto mark = [&seen](detail::TensorNode* p) {
    auto it = std::lower_bound(seen.begin(), seen.end(), p);
    if (it != seen.end() && *it == p) return false;
    seen.insert(it, p);
    return true;
  };
  mark(loss.node().get());
  while (!stack.empty()) {
    detail::TensorNode* cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (const auto& parent : cur->parents)
      if (mark(parent.get())) stack.push_back(parent.get());
  }
  std::sort(order.begin(), order.end(),
            [](const detail::TensorNode* a, const detail::TensorNode* b) {
              return a->seq > b->seq;
            });

  loss.node()->ensure_grad()[0] += 1.0;
  for (detail::TensorNode* node : order) {
    node->ensure_grad();
    if (node->backprop) node->backprop(*node);
  }
}

}  // namespace rdt
