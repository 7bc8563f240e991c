#include "wngan/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

void require_finite(const Tensor& g, const std::string& name) {
  const std::size_t bad = g.first_non_finite();
  if (bad != g.numel()) {
    throw NumericError("rmsprop: non-finite gradient for '" + name + "' at element " + std::to_string(bad) +
                       "; step aborted");
  }
}

void apply(Tensor& param, Tensor& s, const Tensor& g, const RMSPropConfig& cfg) {
  for (std::size_t i = 0; i < param.numel(); ++i) {
    s[i] = cfg.alpha * s[i] + (1.0 - cfg.alpha) * g[i] * g[i];
    param[i] -= cfg.lr * g[i] / (std::sqrt(s[i]) + cfg.eps);
  }
}

}  // namespace

void rmsprop_step(Tensor& param, Tensor& square_avg, const Tensor& grad, const RMSPropConfig& cfg) {
  if (param.shape() != grad.shape() || param.shape() != square_avg.shape()) {
    throw ShapeError("rmsprop: parameter " + shape_to_string(param.shape()) + ", state " +
                     shape_to_string(square_avg.shape()) + " and gradient " + shape_to_string(grad.shape()) +
                     " differ");
  }
  require_finite(grad, "param");
  apply(param, square_avg, grad, cfg);
}

RMSProp::RMSProp(std::vector<NamedParam> params, RMSPropConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0) || !(cfg_.alpha >= 0.0 && cfg_.alpha < 1.0) || !(cfg_.eps >= 0.0)) {
    throw ConfigError("rmsprop: need lr > 0, 0 <= alpha < 1, eps >= 0");
  }
  state_.reserve(params_.size());
  for (const auto& p : params_) state_.emplace_back(p.var.shape());
}

void RMSProp::step() {
  std::vector<Tensor> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    grads.push_back(p.var.grad());
    require_finite(grads.back(), p.name);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var v = params_[i].var;
    apply(v.mutable_value(), state_[i], grads[i], cfg_);
  }
}

void RMSProp::zero_grad() {
  for (auto& p : params_) {
    Var v = p.var;
    v.zero_grad();
  }
}

void clip_slopes(const std::vector<NamedParam>& params, double lo, double hi) {
  for (const auto& p : params) {
    if (p.role != ParamRole::Slope) continue;
    Var v = p.var;
    for (auto& x : v.mutable_value().data()) x = std::clamp(x, lo, hi);
  }
}

}  // namespace wngan
