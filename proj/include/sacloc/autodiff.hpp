#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sacloc::ad {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row_vector(std::span<const double> values);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  double item() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

// Records primitive applications in execution order, which is a topological
// order by construction. Single-threaded; use one tape per worker.
class Tape {
 public:
  // Receives the gradient of this node's output and pushes it to its inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  // A leaf whose gradient is added into *grad_sink by backward(). An empty
  // sink is first zero-filled to the value's shape, also when the leaf is
  // unreachable from the loss.
  Var parameter(const Tensor& value, Tensor* grad_sink);

  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of a node, zero-initialized on first use.
  Tensor& grad_buffer(Var v);
  // Null until backward() has reached the node.
  const Tensor* grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and runs every backward rule in reverse order.
  // Throws NonScalarLoss unless loss is 1 x 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Tensor* sink = nullptr;
  };
  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
};

// Primitive family. Each checks shapes (ShapeMismatch names both shapes) and
// registers its backward rule when any input requires a gradient.
Var matmul(Var a, Var b);
Var add(Var a, Var b);  // b may also be a 1 x cols row broadcast over a's rows
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var a);
Var row_softmax(Var a);
Var scale(Var a, double s);
Var concat_rows(std::span<const Var> parts);
Var select_rows(Var a, std::span<const std::uint32_t> index);          // out[r] = a[index[r]]
Var scatter_add_rows(Var a, std::span<const std::uint32_t> index, std::size_t rows);  // out[index[r]] += a[r]
Var row_dot(Var a, Var b);                                            // n x 1, out[r] = <a[r], b[r]>
Var scale_rows(Var coeff, Var x);                                     // coeff n x 1; out[r] = coeff[r] * x[r]
// Softmax of an n x 1 column taken separately within each segment.
Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t segments);
Var sum(Var a);
Var mean(Var a);
Var abs_sum(Var a);

// Raw kernels shared with non-tape code paths. Accumulate into `out`.
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b^T
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out);  // out += a^T * b

}  // namespace sacloc::ad
