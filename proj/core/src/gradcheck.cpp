#include "wngan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wngan/errors.hpp"

namespace wngan {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: function is non-finite around coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Tensor finite_diff_readout_grad(const VectorFn& f, const Tensor& w, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_readout_grad: step h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const Tensor up = f(probe);
    probe[i] = saved - h;
    const Tensor down = f(probe);
    probe[i] = saved;
    if (up.shape() != w.shape() || down.shape() != w.shape()) {
      throw ShapeError("finite_diff_readout_grad: output shape " + shape_to_string(up.shape()) +
                       " does not match weights " + shape_to_string(w.shape()));
    }
    if (!up.all_finite() || !down.all_finite()) {
      throw NumericError("finite_diff_readout_grad: function is non-finite around coordinate " + std::to_string(i));
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < w.numel(); ++j) acc += w[j] * (up[j] - down[j]);
    grad[i] = acc / (2.0 * h);
  }
  return grad;
}

GradComparison compare_gradients(const Tensor& analytic, const Tensor& numeric, GradTolerance tol) {
  if (analytic.shape() != numeric.shape()) {
    throw ShapeError("compare_gradients: shapes " + shape_to_string(analytic.shape()) + " and " +
                     shape_to_string(numeric.shape()) + " differ");
  }
  GradComparison out;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double diff = std::abs(a - n);
    out.max_abs_error = std::max(out.max_abs_error, diff);
    if (std::abs(a) < tol.small) {
      if (diff > tol.abs) out.passed = false;
      continue;
    }
    const double rel = diff / std::abs(a);
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = i;
    }
    if (rel > tol.rel) out.passed = false;
  }
  return out;
}

}  // namespace wngan
