#pragma once

#include <cstddef>
#include <functional>

#include "wngan/tensor.hpp"

namespace wngan {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate. Throws NumericError naming the coordinate if f is non-finite.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-6);

using VectorFn = std::function<Tensor(const Tensor&)>;

/// Central-difference gradient of the readout x -> sum_j w_j f_j(x). Same
/// estimator as finite_diff_grad on that scalar, but each output is
/// differenced before weighting, so roundoff scales with the outputs rather
/// than with the (possibly much larger) readout sum.
Tensor finite_diff_readout_grad(const VectorFn& f, const Tensor& w, const Tensor& x, double h = 1e-6);

struct GradTolerance {
  double rel = 1e-4;
  /// Elements whose analytic magnitude is below this are compared absolutely.
  double small = 1e-8;
  double abs = 1e-6;
};

struct GradComparison {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

GradComparison compare_gradients(const Tensor& analytic, const Tensor& numeric, GradTolerance tol = {});

}  // namespace wngan
