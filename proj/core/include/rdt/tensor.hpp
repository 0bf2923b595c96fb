#ifndef RDT_TENSOR_HPP_
#define RDT_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rdt {

namespace detail {

// One recorded value in the compute graph. Execution order is captured by a
// monotonically increasing sequence id; backward() replays recorded nodes in
// exact reverse execution order, visiting each node once.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return data.size(); }
  std::vector<double>& ensure_grad();
  void accumulate(const std::vector<double>& g);
};

}  // namespace detail

enum class Act { sigmoid, relu, gelu };

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
// Tensors are immutable after creation except for (a) gradient accumulation
// during backward() and (b) in-place parameter updates between graphs
// (mutable_data). A graph is confined to one logical thread; distinct graphs
// may run concurrently. All reductions use a fixed sequential row-major
// order, so results are bit-reproducible.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  std::size_t size() const;

  const std::vector<double>& data() const;
  // In-place update hook for optimizer steps; never call on a tensor that is
  // part of a live graph about to run backward().
  std::vector<double>& mutable_data();
  double at(std::size_t flat_index) const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  // Leaf-only switch consulted when later graphs are built; flipping it does
  // not alter graphs already recorded.
  void set_requires_grad(bool on);
  bool has_grad() const;
  const std::vector<double>& grad() const;  // ContractError when absent
  void zero_grad();

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_result(std::vector<int> shape,
                               std::vector<double> data,
                               std::span<const Tensor> inputs,
                               std::function<void(detail::TensorNode&)> fn);
};

std::string shape_str(const std::vector<int>& shape);

// Elementwise arithmetic (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);

// 2-D linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// rows(m) x cols(m) plus a length-cols bias added to every row.
Tensor add_rowwise(const Tensor& m, const Tensor& v);

// Normalization over the last dimension.
Tensor softmax_rows(const Tensor& x);
// Per-slice standardization (population variance) followed by affine
// gain/bias, both of length last-dim.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-6);

// Elementwise nonlinearities. gelu uses the exact Gaussian-CDF form
// x * Phi(x), not the tanh approximation.
Tensor activation(const Tensor& x, Act kind);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

// Elementwise transcendentals.
Tensor log_elem(const Tensor& x);  // requires x > 0
// x^p for x >= 0. d/dx at x==0 follows the clipped-input convention used by
// the loss: 0 unless p == 1 (callers reach x==0 only through relu clipping).
Tensor pow_const(const Tensor& x, double p);

// Shape surgery.
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor concat_last(std::span<const Tensor> xs);
Tensor slice_last(const Tensor& x, int start, int len);
// Stack along dim 0; 1-D inputs of length n are treated as 1 x n rows.
Tensor concat_rows(std::span<const Tensor> xs);
Tensor row(const Tensor& x, int index);  // 2-D -> 1-D

// Reductions.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // R x C -> [C]

// Image ops on H x W x C tensors.
// kernel is [kh, kw, in_c, out_c] with odd kh/kw; stride 1, same padding.
Tensor conv2d(const Tensor& image, const Tensor& kernel, const Tensor& bias);
Tensor avg_pool2(const Tensor& image);        // 2x2/stride-2, even H and W
Tensor global_avg_pool(const Tensor& image);  // -> [C]
Tensor slice_block(const Tensor& image, int y0, int x0, int h, int w);

// Reverse-mode sweep from a scalar loss. Populates grad on every
// grad-requiring tensor the loss depends on.
void backward(const Tensor& loss);

}  // namespace rdt

#endif  // RDT_TENSOR_HPP_
