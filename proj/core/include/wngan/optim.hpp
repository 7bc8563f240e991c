#pragma once

#include <vector>

#include "wngan/layers.hpp"

namespace wngan {

struct RMSPropConfig {
  double lr = 1e-4;
  double alpha = 0.9;
  double eps = 1e-6;
};

/// s <- alpha*s + (1-alpha)*g^2;  p <- p - lr*g / (sqrt(s) + eps).
/// Throws NumericError, leaving p and s untouched, if g has a non-finite entry.
void rmsprop_step(Tensor& param, Tensor& square_avg, const Tensor& grad, const RMSPropConfig& cfg);

class RMSProp {
 public:
  RMSProp(std::vector<NamedParam> params, RMSPropConfig cfg);

  /// Updates every parameter from its accumulated gradient. All gradients are
  /// checked before any parameter changes.
  void step();
  void zero_grad();

  const RMSPropConfig& config() const { return cfg_; }
  const std::vector<NamedParam>& params() const { return params_; }
  /// One squared-gradient running average per parameter, in params() order.
  std::vector<Tensor>& state() { return state_; }
  const std::vector<Tensor>& state() const { return state_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> state_;
  RMSPropConfig cfg_;
};

/// Clamps every Slope-role parameter into [lo, hi].
void clip_slopes(const std::vector<NamedParam>& params, double lo = 0.0, double hi = 1.0);

}  // namespace wngan
