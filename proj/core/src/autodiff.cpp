#include "wngan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

void require_finite(const Tensor& t, const char* what) {
  const std::size_t bad = t.first_non_finite();
  if (bad != t.numel()) {
    throw NumericError(std::string(what) + ": non-finite value " + std::to_string(t[bad]) + " at element " +
                       std::to_string(bad) + " of shape " + shape_to_string(t.shape()));
  }
}

std::string pair_message(const char* op, const Shape& a, const Shape& b, const char* what) {
  return std::string(op) + ": " + what + " " + shape_to_string(a) + " and " + shape_to_string(b);
}

struct Broadcast {
  bool a_scalar = false;
  bool b_scalar = false;
  Shape out;
};

Broadcast resolve_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {false, false, a.shape()};
  if (a.numel() == 1) return {true, false, b.shape()};
  if (b.numel() == 1) return {false, true, a.shape()};
  throw ShapeError(pair_message(op, a.shape(), b.shape(), "shapes do not conform:"));
}

Tensor reduce_like(const Tensor& g, const Tensor& operand, bool scalar) {
  if (!scalar) return g;
  double s = 0.0;
  for (double v : g.data()) s += v;
  Tensor out(operand.shape());
  out[0] = s;
  return out;
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  return out;
}

// Unary op whose local derivative can be written from (x, y).
template <class F, class DF>
Var unary(const Var& a, F f, DF df, const char* name) {
  Tensor y = map_unary(a.value(), f);
  return make_result(y, {a}, [a, y, df](const Tensor& g) {
    const Tensor& x = a.value();
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) ga[i] = g[i] * df(x[i], y[i]);
    accumulate_into(a, ga);
  }, name);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t dim = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

struct ConvDims {
  std::size_t n, c, h, w;    // input side of the forward convolution
  std::size_t o, kh, kw;     // kernel
  std::size_t oh, ow;        // output side of the forward convolution
  std::size_t sh, sw, ph, pw;
};

// y[n,o,i,j] += w[o,c,p,q] * x[n,c,i*sh+p-ph, j*sw+q-pw]
void conv_gather(const ConvDims& d, const double* x, const double* w, double* y) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < d.o; ++o) {
      double* yo = y + (n * d.o + o) * d.oh * d.ow;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* xc = x + (n * d.c + c) * d.h * d.w;
        const double* wk = w + (o * d.c + c) * d.kh * d.kw;
        for (std::size_t p = 0; p < d.kh; ++p) {
          for (std::size_t q = 0; q < d.kw; ++q) {
            const double wv = wk[p * d.kw + q];
            for (std::size_t i = 0; i < d.oh; ++i) {
              const auto ii = static_cast<std::ptrdiff_t>(i * d.sh + p) - static_cast<std::ptrdiff_t>(d.ph);
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(d.h)) continue;
              const double* xrow = xc + static_cast<std::size_t>(ii) * d.w;
              double* yrow = yo + i * d.ow;
              for (std::size_t j = 0; j < d.ow; ++j) {
                const auto jj = static_cast<std::ptrdiff_t>(j * d.sw + q) - static_cast<std::ptrdiff_t>(d.pw);
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(d.w)) continue;
                yrow[j] += wv * xrow[jj];
              }
            }
          }
        }
      }
    }
  }
}

// x[n,c,i*sh+p-ph, j*sw+q-pw] += w[o,c,p,q] * y[n,o,i,j]
void conv_scatter(const ConvDims& d, const double* y, const double* w, double* x) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < d.o; ++o) {
      const double* yo = y + (n * d.o + o) * d.oh * d.ow;
      for (std::size_t c = 0; c < d.c; ++c) {
        double* xc = x + (n * d.c + c) * d.h * d.w;
        const double* wk = w + (o * d.c + c) * d.kh * d.kw;
        for (std::size_t p = 0; p < d.kh; ++p) {
          for (std::size_t q = 0; q < d.kw; ++q) {
            const double wv = wk[p * d.kw + q];
            for (std::size_t i = 0; i < d.oh; ++i) {
              const auto ii = static_cast<std::ptrdiff_t>(i * d.sh + p) - static_cast<std::ptrdiff_t>(d.ph);
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(d.h)) continue;
              double* xrow = xc + static_cast<std::size_t>(ii) * d.w;
              const double* yrow = yo + i * d.ow;
              for (std::size_t j = 0; j < d.ow; ++j) {
                const auto jj = static_cast<std::ptrdiff_t>(j * d.sw + q) - static_cast<std::ptrdiff_t>(d.pw);
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(d.w)) continue;
                xrow[jj] += wv * yrow[j];
              }
            }
          }
        }
      }
    }
  }
}

// dw[o,c,p,q] += y[n,o,i,j] * x[n,c,i*sh+p-ph, j*sw+q-pw]
void conv_kernel_grad(const ConvDims& d, const double* y, const double* x, double* dw) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < d.o; ++o) {
      const double* yo = y + (n * d.o + o) * d.oh * d.ow;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* xc = x + (n * d.c + c) * d.h * d.w;
        double* wk = dw + (o * d.c + c) * d.kh * d.kw;
        for (std::size_t p = 0; p < d.kh; ++p) {
          for (std::size_t q = 0; q < d.kw; ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d.oh; ++i) {
              const auto ii = static_cast<std::ptrdiff_t>(i * d.sh + p) - static_cast<std::ptrdiff_t>(d.ph);
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(d.h)) continue;
              const double* xrow = xc + static_cast<std::size_t>(ii) * d.w;
              const double* yrow = yo + i * d.ow;
              for (std::size_t j = 0; j < d.ow; ++j) {
                const auto jj = static_cast<std::ptrdiff_t>(j * d.sw + q) - static_cast<std::ptrdiff_t>(d.pw);
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(d.w)) continue;
                acc += yrow[j] * xrow[jj];
              }
            }
            wk[p * d.kw + q] += acc;
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got shape " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (g.shape() != value.shape()) {
    throw ShapeError("gradient shape " + shape_to_string(g.shape()) + " does not match value shape " +
                     shape_to_string(value.shape()));
  }
  require_finite(g, "backward");
  if (!has_grad) {
    grad = g;
    has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.numel(); ++i) grad[i] += g[i];
}

Var::Var() : node_(std::make_shared<Node>()) {}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  require_finite(value, "Var");
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() {
  node_->has_grad = false;
  node_->grad = Tensor();
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(const Tensor&)> backward_fn,
                const char* op_name) {
  require_finite(value, op_name);
  Var out(std::move(value), false);
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (needs) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& p : parents) node.parents.push_back(p.node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

void accumulate_into(const Var& v, const Tensor& g) {
  if (v.requires_grad()) v.node()->accumulate(g);
}

void backward(const Var& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn || !node->has_grad) continue;
    node->backward_fn(node->grad);
    // Interior grads are consumed; leaves keep theirs.
    node->has_grad = false;
    node->grad = Tensor();
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  const auto bc = resolve_broadcast(a.value(), b.value(), "add");
  Tensor y(bc.out);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[bc.a_scalar ? 0 : i] + bv[bc.b_scalar ? 0 : i];
  return make_result(std::move(y), {a, b}, [a, b, bc](const Tensor& g) {
    accumulate_into(a, reduce_like(g, a.value(), bc.a_scalar));
    accumulate_into(b, reduce_like(g, b.value(), bc.b_scalar));
  }, "add");
}

Var sub(const Var& a, const Var& b) {
  const auto bc = resolve_broadcast(a.value(), b.value(), "sub");
  Tensor y(bc.out);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[bc.a_scalar ? 0 : i] - bv[bc.b_scalar ? 0 : i];
  return make_result(std::move(y), {a, b}, [a, b, bc](const Tensor& g) {
    accumulate_into(a, reduce_like(g, a.value(), bc.a_scalar));
    Tensor ng = map_unary(g, [](double v) { return -v; });
    accumulate_into(b, reduce_like(ng, b.value(), bc.b_scalar));
  }, "sub");
}

Var mul(const Var& a, const Var& b) {
  const auto bc = resolve_broadcast(a.value(), b.value(), "mul");
  Tensor y(bc.out);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[bc.a_scalar ? 0 : i] * bv[bc.b_scalar ? 0 : i];
  return make_result(std::move(y), {a, b}, [a, b, bc](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * bv[bc.b_scalar ? 0 : i];
      accumulate_into(a, reduce_like(ga, av, bc.a_scalar));
    }
    if (b.requires_grad()) {
      Tensor gb(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] = g[i] * av[bc.a_scalar ? 0 : i];
      accumulate_into(b, reduce_like(gb, bv, bc.b_scalar));
    }
  }, "mul");
}

Var div(const Var& a, const Var& b) {
  const auto bc = resolve_broadcast(a.value(), b.value(), "div");
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < bv.numel(); ++i) {
    if (bv[i] == 0.0) throw NumericError("div: division by zero at element " + std::to_string(i));
  }
  Tensor y(bc.out);
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[bc.a_scalar ? 0 : i] / bv[bc.b_scalar ? 0 : i];
  return make_result(std::move(y), {a, b}, [a, b, bc](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = g[i] / bv[bc.b_scalar ? 0 : i];
      accumulate_into(a, reduce_like(ga, av, bc.a_scalar));
    }
    if (b.requires_grad()) {
      Tensor gb(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const double d = bv[bc.b_scalar ? 0 : i];
        gb[i] = -g[i] * av[bc.a_scalar ? 0 : i] / (d * d);
      }
      accumulate_into(b, reduce_like(gb, bv, bc.b_scalar));
    }
  }, "div");
}

Var neg(const Var& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; }, "neg");
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Var mul_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; }, "mul_scalar");
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; }, "sqrt");
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(x); }, "softplus");
}

Var max_scalar(const Var& a, double c) {
  return unary(a, [c](double x) { return x >= c ? x : c; }, [c](double x, double) { return x >= c ? 1.0 : 0.0; },
               "max_scalar");
}

// ---------------------------------------------------------------------------
// Reductions and shape ops

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_result(Tensor::scalar(s), {a}, [a](const Tensor& g) {
    accumulate_into(a, Tensor(a.shape(), g.item()));
  }, "sum");
}

Var mean(const Var& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return make_result(std::move(y), {a}, [a](const Tensor& g) { accumulate_into(a, g.reshaped(a.shape())); },
                     "reshape");
}

Var reduce_to_axis(const Var& a, std::size_t axis) {
  const auto s = split_at(a.shape(), axis, "reduce_to_axis");
  Tensor y(Shape{s.dim});
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t d = 0; d < s.dim; ++d)
      for (std::size_t i = 0; i < s.inner; ++i) y[d] += x[(o * s.dim + d) * s.inner + i];
  return make_result(std::move(y), {a}, [a, s](const Tensor& g) {
    Tensor ga(a.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t d = 0; d < s.dim; ++d)
        for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.dim + d) * s.inner + i] = g[d];
    accumulate_into(a, ga);
  }, "reduce_to_axis");
}

Var broadcast_axis(const Var& v, const Shape& shape, std::size_t axis) {
  const auto s = split_at(shape, axis, "broadcast_axis");
  if (v.value().rank() != 1 || v.numel() != s.dim) {
    throw ShapeError(pair_message("broadcast_axis", v.shape(), shape, "cannot broadcast") + " along axis " +
                     std::to_string(axis));
  }
  Tensor y(shape);
  const Tensor& x = v.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t d = 0; d < s.dim; ++d)
      for (std::size_t i = 0; i < s.inner; ++i) y[(o * s.dim + d) * s.inner + i] = x[d];
  return make_result(std::move(y), {v}, [v, s](const Tensor& g) {
    Tensor gv(v.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t d = 0; d < s.dim; ++d)
        for (std::size_t i = 0; i < s.inner; ++i) gv[d] += g[(o * s.dim + d) * s.inner + i];
    accumulate_into(v, gv);
  }, "broadcast_axis");
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul", "left operand");
  if (bv.rank() != 1 && bv.rank() != 2) {
    throw ShapeError("matmul: right operand must have rank 1 or 2, got " + shape_to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1);
  const std::size_t n = bv.rank() == 2 ? bv.dim(1) : 1;
  if (bv.dim(0) != k) throw ShapeError(pair_message("matmul", av.shape(), bv.shape(), "inner dimensions differ for"));
  Tensor y(bv.rank() == 2 ? Shape{m, n} : Shape{m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
    }
  return make_result(std::move(y), {a, b}, [a, b, m, k, n](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] = acc;
        }
      accumulate_into(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(bv.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      accumulate_into(b, gb);
    }
  }, "matmul");
}

Var linear(const Var& x, const Var& w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(wv, 2, "linear", "weight");
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw ShapeError("linear: input must have rank 1 or 2, got " + shape_to_string(xv.shape()));
  }
  const std::size_t out = wv.dim(0), in = wv.dim(1);
  const std::size_t rows = xv.rank() == 2 ? xv.dim(0) : 1;
  if (xv.shape().back() != in) {
    throw ShapeError(pair_message("linear", xv.shape(), wv.shape(), "input features do not match weight for"));
  }
  Tensor y(xv.rank() == 2 ? Shape{rows, out} : Shape{out});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xv[r * in + i] * wv[o * in + i];
      y[r * out + o] = acc;
    }
  return make_result(std::move(y), {x, w}, [x, w, rows, out, in](const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (x.requires_grad()) {
      Tensor gx(xv.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const double gro = g[r * out + o];
          for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += gro * wv[o * in + i];
        }
      accumulate_into(x, gx);
    }
    if (w.requires_grad()) {
      Tensor gw(wv.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const double gro = g[r * out + o];
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += gro * xv[r * in + i];
        }
      accumulate_into(w, gw);
    }
  }, "linear");
}

// ---------------------------------------------------------------------------
// Convolutions

Var conv2d(const Var& x, const Var& w, ConvGeometry g) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 4, "conv2d", "input");
  require_rank(wv, 4, "conv2d", "kernel");
  if (xv.dim(1) != wv.dim(1)) {
    throw ShapeError(pair_message("conv2d", xv.shape(), wv.shape(), "input channels do not match kernel for"));
  }
  if (g.stride_h == 0 || g.stride_w == 0) throw ShapeError("conv2d: stride must be positive");
  const auto span_h = static_cast<std::ptrdiff_t>(xv.dim(2) + 2 * g.pad_h) - static_cast<std::ptrdiff_t>(wv.dim(2));
  const auto span_w = static_cast<std::ptrdiff_t>(xv.dim(3) + 2 * g.pad_w) - static_cast<std::ptrdiff_t>(wv.dim(3));
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: input " + shape_to_string(xv.shape()) + " with kernel " + shape_to_string(wv.shape()) +
                     " and padding (" + std::to_string(g.pad_h) + "," + std::to_string(g.pad_w) +
                     ") gives computed output size " + std::to_string(span_h / static_cast<std::ptrdiff_t>(g.stride_h) + 1) +
                     "x" + std::to_string(span_w / static_cast<std::ptrdiff_t>(g.stride_w) + 1));
  }
  ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3),
             static_cast<std::size_t>(span_h) / g.stride_h + 1, static_cast<std::size_t>(span_w) / g.stride_w + 1,
             g.stride_h, g.stride_w, g.pad_h, g.pad_w};
  Tensor y(Shape{d.n, d.o, d.oh, d.ow});
  conv_gather(d, xv.data().data(), wv.data().data(), y.data().data());
  return make_result(std::move(y), {x, w}, [x, w, d](const Tensor& gy) {
    if (x.requires_grad()) {
      Tensor gx(x.shape());
      conv_scatter(d, gy.data().data(), w.value().data().data(), gx.data().data());
      accumulate_into(x, gx);
    }
    if (w.requires_grad()) {
      Tensor gw(w.shape());
      conv_kernel_grad(d, gy.data().data(), x.value().data().data(), gw.data().data());
      accumulate_into(w, gw);
    }
  }, "conv2d");
}

Var conv2d_transposed(const Var& x, const Var& w, ConvGeometry g) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 4, "conv2d_transposed", "input");
  require_rank(wv, 4, "conv2d_transposed", "kernel");
  if (xv.dim(1) != wv.dim(0)) {
    throw ShapeError(
        pair_message("conv2d_transposed", xv.shape(), wv.shape(), "input channels do not match kernel for"));
  }
  if (g.stride_h == 0 || g.stride_w == 0) throw ShapeError("conv2d_transposed: stride must be positive");
  const auto out_h = static_cast<std::ptrdiff_t>((xv.dim(2) - 1) * g.stride_h + wv.dim(2)) -
                     static_cast<std::ptrdiff_t>(2 * g.pad_h);
  const auto out_w = static_cast<std::ptrdiff_t>((xv.dim(3) - 1) * g.stride_w + wv.dim(3)) -
                     static_cast<std::ptrdiff_t>(2 * g.pad_w);
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("conv2d_transposed: input " + shape_to_string(xv.shape()) + " with kernel " +
                     shape_to_string(wv.shape()) + " gives computed output size " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  ConvDims d{xv.dim(0), wv.dim(1), static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w),
             wv.dim(0), wv.dim(2), wv.dim(3), xv.dim(2), xv.dim(3),
             g.stride_h, g.stride_w, g.pad_h, g.pad_w};
  Tensor y(Shape{d.n, d.c, d.h, d.w});
  conv_scatter(d, xv.data().data(), wv.data().data(), y.data().data());
  return make_result(std::move(y), {x, w}, [x, w, d](const Tensor& gy) {
    if (x.requires_grad()) {
      Tensor gx(x.shape());
      conv_gather(d, gy.data().data(), w.value().data().data(), gx.data().data());
      accumulate_into(x, gx);
    }
    if (w.requires_grad()) {
      Tensor gw(w.shape());
      conv_kernel_grad(d, x.value().data().data(), gy.data().data(), gw.data().data());
      accumulate_into(w, gw);
    }
  }, "conv2d_transposed");
}

Var avg_pool2(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "avg_pool2", "input");
  if (xv.dim(2) % 2 || xv.dim(3) % 2) {
    throw ShapeError("avg_pool2: spatial size of " + shape_to_string(xv.shape()) + " must be even");
  }
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor y(Shape{xv.dim(0), xv.dim(1), h / 2, w / 2});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        const double* base = xv.data().data() + p * h * w + 2 * i * w + 2 * j;
        y[(p * (h / 2) + i) * (w / 2) + j] = 0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
      }
  return make_result(std::move(y), {x}, [x, nc, h, w](const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[(p * h + i) * w + j] = 0.25 * g[(p * (h / 2) + i / 2) * (w / 2) + j / 2];
    accumulate_into(x, gx);
  }, "avg_pool2");
}

Var upsample_nearest2(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "upsample_nearest2", "input");
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor y(Shape{xv.dim(0), xv.dim(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j) y[(p * 2 * h + i) * 2 * w + j] = xv[(p * h + i / 2) * w + j / 2];
  return make_result(std::move(y), {x}, [x, nc, h, w](const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t i = 0; i < 2 * h; ++i)
        for (std::size_t j = 0; j < 2 * w; ++j) gx[(p * h + i / 2) * w + j / 2] += g[(p * 2 * h + i) * 2 * w + j];
    accumulate_into(x, gx);
  }, "upsample_nearest2");
}

// ---------------------------------------------------------------------------
// Activations with per-channel parameters

Var translated_prelu(const Var& x, const Var& alpha, const Var& slope, std::size_t axis) {
  const auto s = split_at(x.shape(), axis, "translated_prelu");
  if (alpha.numel() != s.dim || slope.numel() != s.dim) {
    throw ShapeError("translated_prelu: " + std::to_string(s.dim) + " channels in " + shape_to_string(x.shape()) +
                     " but alpha " + shape_to_string(alpha.shape()) + " and slope " +
                     shape_to_string(slope.shape()));
  }
  const Tensor& xv = x.value();
  const Tensor& av = alpha.value();
  const Tensor& sv = slope.value();
  Tensor y(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t d = 0; d < s.dim; ++d)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t k = (o * s.dim + d) * s.inner + i;
        y[k] = xv[k] >= av[d] ? xv[k] : sv[d] * (xv[k] - av[d]) + av[d];
      }
  return make_result(std::move(y), {x, alpha, slope}, [x, alpha, slope, s](const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& av = alpha.value();
    const Tensor& sv = slope.value();
    Tensor gx(xv.shape());
    Tensor ga(alpha.shape());
    Tensor gs(slope.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t d = 0; d < s.dim; ++d)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t k = (o * s.dim + d) * s.inner + i;
          if (xv[k] >= av[d]) {
            gx[k] = g[k];
          } else {
            gx[k] = sv[d] * g[k];
            ga[d] += (1.0 - sv[d]) * g[k];
            gs[d] += (xv[k] - av[d]) * g[k];
          }
        }
    accumulate_into(x, gx);
    accumulate_into(alpha, ga);
    accumulate_into(slope, gs);
  }, "translated_prelu");
}

}  // namespace wngan
