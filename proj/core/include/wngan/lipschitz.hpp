#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wngan/network.hpp"

namespace wngan {

/// Strips the sigmoid of a wn discriminator and makes its affine output
/// layer strict. Throws ConfigError for any other kind of spec.
NetworkSpec make_critic(const NetworkSpec& disc);

/// Bound on sum |dL/dx| / sum |dL/dy| for one layer:
///   strict WN linear       sqrt(in)
///   strict WN (t)conv      sqrt(c_in * k * k) * sqrt(stride_h * stride_w)
///   (T)PReLU, pooling, upsampling   1
///   WN residual block      sqrt(F_shortcut^2 + F_residue^2)
/// Throws ConfigError for layers with no parameter-free bound (biases,
/// batch norm, affine WN, plain linear/conv, sigmoid).
double layer_factor(const LayerDesc& layer);

struct LipschitzBudget {
  std::vector<std::pair<std::string, double>> factors;  // one per layer
  double K = 1.0;

  nlohmann::ordered_json to_json() const;
};

/// Product of layer factors. Because the factors bound the L1 norm of
/// gradients, K bounds |f(x1) - f(x2)| / max_i |x1_i - x2_i|.
LipschitzBudget lipschitz_budget(const NetworkSpec& critic);

struct GradientBoundReport {
  std::string layer;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double factor = 0.0;
  double max_ratio = 0.0;  // max of sum|dL/dx| / sum|dL/dy|
  bool passed = false;

  nlohmann::ordered_json to_json() const;
};

/// Relative slack allowed on the bound before a trial counts as a violation.
inline constexpr double kBoundSlack = 1e-9;

/// Instantiates `layer` with random weights for each trial, feeds a random
/// [1, ...input_shape] input, back-propagates a random upstream gradient and
/// checks sum|dL/dx| <= factor * sum|dL/dy|. Every fourth trial scales the
/// weights down to norm ~1e-4 so the eps term dominates.
GradientBoundReport check_gradient_bound(const LayerDesc& layer, const Shape& input_shape, std::size_t trials,
                                         std::uint64_t seed);

/// Named layer types with random shapes per trial: strict_wn_linear,
/// strict_wn_conv, strict_wn_conv_stride2, strict_wn_conv_transpose, tprelu.
/// `fan_in` fixes the linear layer's input size when nonzero.
GradientBoundReport check_gradient_bound(const std::string& layer, std::size_t trials, std::uint64_t seed,
                                         std::size_t fan_in = 0);
std::vector<std::string> bound_layer_names();

/// Evaluates a scalar function on a batch [p, ...]; returns p values.
using BatchScalarFn = std::function<Tensor(const Tensor& x)>;

struct ProbeReport {
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // coincident pairs
  double max_ratio = 0.0;
  double budget = 0.0;
  bool passed = false;

  nlohmann::ordered_json to_json() const;
};

/// Max over random pairs in [0, 1]^shape of |f(x1) - f(x2)| / |x1 - x2|_inf.
/// Half the pairs are independent, half are local perturbations of size
/// up to 1e-2.
ProbeReport empirical_lipschitz(const BatchScalarFn& f, const Shape& input_shape, std::size_t pairs, double budget,
                                std::uint64_t seed);
ProbeReport empirical_lipschitz(Network& critic, std::size_t pairs, std::uint64_t seed);

/// Per-sample input shape of every top-level layer of `net`.
std::vector<Shape> layer_input_shapes(Network& net);

}  // namespace wngan
