#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wngan/tensor.hpp"

namespace wngan {

/// One vertex of the reverse-mode tape.
///
/// `grad` stays empty until something is accumulated into it. Parents are
/// held by shared ownership, children never are, so a graph is freed as soon
/// as its root handle goes away. A graph must only be touched by one thread.
struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Pushes `upstream` (d root / d this) into the parents' grads.
  std::function<void(const Tensor& upstream)> backward_fn;

  void accumulate(const Tensor& g);
};

/// Handle to a tape node. Copies alias the same node.
class Var {
 public:
  Var();
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and loaders; only meaningful on leaves.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->has_grad; }
  /// Accumulated gradient; zeros of value().shape() if nothing arrived yet.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a result node. `backward_fn` receives d root / d result and must
/// accumulate into the parents; it is dropped when no parent needs gradients.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(const Tensor&)> backward_fn,
                const char* op_name);

/// Accumulates `g` into `v` if it participates in differentiation.
void accumulate_into(const Var& v, const Tensor& g);

/// Reverse sweep from a one-element root. Gradients add up across multiple
/// uses of a node, and across repeated calls on leaves until zero_grad().
void backward(const Var& root);

struct ConvGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  static ConvGeometry square(std::size_t stride, std::size_t pad) { return {stride, stride, pad, pad}; }
};

// Elementwise. Operands must have equal shapes, except that a one-element
// operand broadcasts against the other.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var square(const Var& a);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
/// log(1 + exp(x)), evaluated without overflow.
Var softplus(const Var& a);
/// max(x, c) elementwise; the gradient goes to x where x >= c.
Var max_scalar(const Var& a, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

// Reductions produce a scalar of shape [].
Var sum(const Var& a);
Var mean(const Var& a);

/// [m,k] x [k,n] -> [m,n]; a rank-1 right operand [k] gives [m].
Var matmul(const Var& a, const Var& b);
/// x [n,in] (or [in]) times w[out,in] transposed -> [n,out] (or [out]).
Var linear(const Var& x, const Var& w);

/// x [N,C,H,W], w [O,C,KH,KW] -> [N,O,(H+2ph-KH)/sh+1,(W+2pw-KW)/sw+1].
Var conv2d(const Var& x, const Var& w, ConvGeometry g);
/// Adjoint of conv2d with the same kernel: x [N,O,H,W], w [O,C,KH,KW]
/// -> [N,C,(H-1)sh-2ph+KH,(W-1)sw-2pw+KW].
Var conv2d_transposed(const Var& x, const Var& w, ConvGeometry g);

/// 2x2 mean pooling with stride 2; H and W must be even.
Var avg_pool2(const Var& x);
/// Nearest-neighbour 2x upscaling of an NCHW map.
Var upsample_nearest2(const Var& x);

Var reshape(const Var& a, Shape shape);

/// Sums every axis except `axis`; the result has shape [a.shape()[axis]].
Var reduce_to_axis(const Var& a, std::size_t axis);
/// Repeats v [shape[axis]] along every other axis of `shape`.
Var broadcast_axis(const Var& v, const Shape& shape, std::size_t axis);

/// Translated parametric ReLU along channel `axis`:
/// y = x for x >= alpha, slope*(x - alpha) + alpha otherwise.
/// alpha and slope have shape [x.shape()[axis]].
Var translated_prelu(const Var& x, const Var& alpha, const Var& slope, std::size_t axis);

}  // namespace wngan
