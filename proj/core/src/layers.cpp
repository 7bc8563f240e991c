#include "wngan/layers.hpp"

#include <cmath>
#include <string>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

void fill_uniform(Var& v, CounterRng& rng, double bound) {
  for (auto& x : v.mutable_value().data()) x = rng.uniform(-bound, bound);
}

void fill(Var& v, double value) {
  for (auto& x : v.mutable_value().data()) x = value;
}

void require_channels(const Var& x, std::size_t expected, const char* layer) {
  if (x.value().rank() < 1) throw ShapeError(std::string(layer) + ": scalar input");
  const std::size_t axis = channel_axis(x.shape());
  if (x.shape()[axis] != expected) {
    throw ShapeError(std::string(layer) + ": expected " + std::to_string(expected) + " channels, got input " +
                     shape_to_string(x.shape()));
  }
}

Var as_map(const Var& x) {
  if (x.value().rank() == 2) return reshape(x, {x.shape()[0], x.shape()[1], 1, 1});
  return x;
}

}  // namespace

std::size_t channel_axis(const Shape& shape) { return shape.size() <= 1 ? 0 : 1; }

Var weight_norm_divisor(const Var& kernel, std::size_t out_axis, std::size_t stride_h, std::size_t stride_w,
                        double eps) {
  Var norms = sqrt(add_scalar(reduce_to_axis(square(kernel), out_axis), eps));
  const double stride_area = static_cast<double>(stride_h * stride_w);
  if (stride_area == 1.0) return norms;
  return mul_scalar(norms, 1.0 / std::sqrt(stride_area));
}

Var normalize_weight(const Var& kernel, std::size_t out_axis, std::size_t stride_h, std::size_t stride_w,
                     double eps) {
  Var divisor = weight_norm_divisor(kernel, out_axis, stride_h, stride_w, eps);
  return div(kernel, broadcast_axis(divisor, kernel.shape(), out_axis));
}

Var channel_affine(const Var& x, const Var& gamma, const Var& beta) {
  const std::size_t axis = channel_axis(x.shape());
  return add(mul(x, broadcast_axis(gamma, x.shape(), axis)), broadcast_axis(beta, x.shape(), axis));
}

// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out)
    : weight(Var::parameter(Tensor({out, in}))), bias(Var::parameter(Tensor({out}))) {}

Var Linear::forward(const Var& x, Mode) {
  Var y = linear(x, weight);
  return add(y, broadcast_axis(bias, y.shape(), channel_axis(y.shape())));
}

void Linear::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "weight", weight, ParamRole::Weight});
  out.push_back({prefix + "bias", bias, ParamRole::Bias});
}

void Linear::reset_parameters(CounterRng& rng) {
  fill_uniform(weight, rng, 1.0 / std::sqrt(static_cast<double>(weight.shape()[1])));
  fill(bias, 0.0);
}

StrictWNLinear::StrictWNLinear(std::size_t in, std::size_t out) : weight(Var::parameter(Tensor({out, in}))) {}

Var StrictWNLinear::forward(const Var& x, Mode) { return linear(x, normalize_weight(weight, 0, 1, 1, eps)); }

void StrictWNLinear::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "weight", weight, ParamRole::Weight});
}

void StrictWNLinear::reset_parameters(CounterRng& rng) {
  fill_uniform(weight, rng, init_scale / std::sqrt(static_cast<double>(weight.shape()[1])));
}

AffineWNLinear::AffineWNLinear(std::size_t in, std::size_t out)
    : weight(Var::parameter(Tensor({out, in}))),
      gamma(Var::parameter(Tensor({out}, 1.0))),
      beta(Var::parameter(Tensor({out}))) {}

Var AffineWNLinear::forward(const Var& x, Mode) {
  return channel_affine(linear(x, normalize_weight(weight, 0, 1, 1, eps)), gamma, beta);
}

void AffineWNLinear::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "weight", weight, ParamRole::Weight});
  out.push_back({prefix + "gamma", gamma, ParamRole::Gamma});
  out.push_back({prefix + "beta", beta, ParamRole::Beta});
}

void AffineWNLinear::reset_parameters(CounterRng& rng) {
  fill_uniform(weight, rng, 1.0 / std::sqrt(static_cast<double>(weight.shape()[1])));
  fill(gamma, 1.0);
  fill(beta, 0.0);
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::size_t c_in, std::size_t c_out, std::size_t k, ConvGeometry g)
    : kernel(Var::parameter(Tensor({c_out, c_in, k, k}))), bias(Var::parameter(Tensor({c_out}))), geometry(g) {}

Var Conv2d::forward(const Var& x, Mode) {
  Var y = conv2d(x, kernel, geometry);
  return add(y, broadcast_axis(bias, y.shape(), 1));
}

void Conv2d::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "kernel", kernel, ParamRole::Weight});
  out.push_back({prefix + "bias", bias, ParamRole::Bias});
}

void Conv2d::reset_parameters(CounterRng& rng) {
  const auto& s = kernel.shape();
  fill_uniform(kernel, rng, 1.0 / std::sqrt(static_cast<double>(s[1] * s[2] * s[3])));
  fill(bias, 0.0);
}

ConvTranspose2d::ConvTranspose2d(std::size_t c_in, std::size_t c_out, std::size_t k, ConvGeometry g)
    : kernel(Var::parameter(Tensor({c_in, c_out, k, k}))), bias(Var::parameter(Tensor({c_out}))), geometry(g) {}

Var ConvTranspose2d::forward(const Var& x, Mode) {
  Var y = conv2d_transposed(as_map(x), kernel, geometry);
  return add(y, broadcast_axis(bias, y.shape(), 1));
}

void ConvTranspose2d::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "kernel", kernel, ParamRole::Weight});
  out.push_back({prefix + "bias", bias, ParamRole::Bias});
}

void ConvTranspose2d::reset_parameters(CounterRng& rng) {
  const auto& s = kernel.shape();
  fill_uniform(kernel, rng, 1.0 / std::sqrt(static_cast<double>(s[0] * s[2] * s[3])));
  fill(bias, 0.0);
}

WNConv2d::WNConv2d(std::size_t c_in, std::size_t c_out, std::size_t k, ConvGeometry g, WNMode m)
    : kernel(Var::parameter(Tensor({c_out, c_in, k, k}))),
      gamma(Var::parameter(Tensor({c_out}, 1.0))),
      beta(Var::parameter(Tensor({c_out}))),
      geometry(g),
      mode(m) {}

Var WNConv2d::effective_kernel() const {
  return normalize_weight(kernel, 0, geometry.stride_h, geometry.stride_w, eps);
}

Var WNConv2d::forward(const Var& x, Mode) {
  Var y = conv2d(x, effective_kernel(), geometry);
  if (mode == WNMode::Affine) y = channel_affine(y, gamma, beta);
  return y;
}

void WNConv2d::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "kernel", kernel, ParamRole::Weight});
  if (mode == WNMode::Affine) {
    out.push_back({prefix + "gamma", gamma, ParamRole::Gamma});
    out.push_back({prefix + "beta", beta, ParamRole::Beta});
  }
}

void WNConv2d::reset_parameters(CounterRng& rng) {
  const auto& s = kernel.shape();
  fill_uniform(kernel, rng, 1.0 / std::sqrt(static_cast<double>(s[1] * s[2] * s[3])));
  fill(gamma, 1.0);
  fill(beta, 0.0);
}

WNConvTranspose2d::WNConvTranspose2d(std::size_t c_in, std::size_t c_out, std::size_t k, ConvGeometry g, WNMode m)
    : kernel(Var::parameter(Tensor({c_in, c_out, k, k}))),
      gamma(Var::parameter(Tensor({c_out}, 1.0))),
      beta(Var::parameter(Tensor({c_out}))),
      geometry(g),
      mode(m) {}

Var WNConvTranspose2d::effective_kernel() const {
  return normalize_weight(kernel, 1, geometry.stride_h, geometry.stride_w, eps);
}

Var WNConvTranspose2d::forward(const Var& x, Mode) {
  Var y = conv2d_transposed(as_map(x), effective_kernel(), geometry);
  if (mode == WNMode::Affine) y = channel_affine(y, gamma, beta);
  return y;
}

void WNConvTranspose2d::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "kernel", kernel, ParamRole::Weight});
  if (mode == WNMode::Affine) {
    out.push_back({prefix + "gamma", gamma, ParamRole::Gamma});
    out.push_back({prefix + "beta", beta, ParamRole::Beta});
  }
}

void WNConvTranspose2d::reset_parameters(CounterRng& rng) {
  const auto& s = kernel.shape();
  fill_uniform(kernel, rng, 1.0 / std::sqrt(static_cast<double>(s[0] * s[2] * s[3])));
  fill(gamma, 1.0);
  fill(beta, 0.0);
}

WNFullyConnectedToMap::WNFullyConnectedToMap(std::size_t latent_dim, std::size_t c, std::size_t h, std::size_t w)
    : fc(latent_dim, c * h * w), channels(c), height(h), width(w) {
  fc.init_scale = 0.01;
}

Var WNFullyConnectedToMap::forward(const Var& z, Mode mode) {
  if (z.value().rank() != 2) {
    throw ShapeError("wn_fc_to_map: expected latent batch [N, latent], got " + shape_to_string(z.shape()));
  }
  Var y = fc.forward(z, mode);
  return reshape(y, {z.shape()[0], channels, height, width});
}

void WNFullyConnectedToMap::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  fc.parameters(prefix, out);
}

void WNFullyConnectedToMap::reset_parameters(CounterRng& rng) { fc.reset_parameters(rng); }

// ---------------------------------------------------------------------------

TPReLU::TPReLU(std::size_t channels, bool translated_)
    : alpha(Var(Tensor({channels}), translated_)),
      slope(Var::parameter(Tensor({channels}, kPReLUInitSlope))),
      translated(translated_) {}

Var TPReLU::forward(const Var& x, Mode) {
  require_channels(x, slope.numel(), translated ? "tprelu" : "prelu");
  return translated_prelu(x, alpha, slope, channel_axis(x.shape()));
}

void TPReLU::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  if (translated) out.push_back({prefix + "alpha", alpha, ParamRole::Alpha});
  out.push_back({prefix + "slope", slope, ParamRole::Slope});
}

void TPReLU::reset_parameters(CounterRng&) {
  fill(alpha, 0.0);
  fill(slope, kPReLUInitSlope);
}

BatchNorm::BatchNorm(std::size_t channels, bool mean_only_)
    : gamma(Var::parameter(Tensor({channels}, 1.0))),
      beta(Var::parameter(Tensor({channels}))),
      running_mean(Tensor({channels})),
      running_var(Tensor({channels}, 1.0)),
      mean_only(mean_only_) {}

Var BatchNorm::forward(const Var& x, Mode mode) {
  if (x.value().rank() < 2) {
    throw ShapeError("batchnorm: expected a batch [N, C, ...], got " + shape_to_string(x.shape()));
  }
  require_channels(x, beta.numel(), "batchnorm");
  const Shape& shape = x.shape();

  if (mode == Mode::Inference) {
    Var mu = broadcast_axis(Var::constant(running_mean), shape, 1);
    if (mean_only) return add(sub(x, mu), broadcast_axis(beta, shape, 1));
    Tensor inv_std(running_var.shape());
    for (std::size_t c = 0; c < inv_std.numel(); ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    Var xhat = mul(sub(x, mu), broadcast_axis(Var::constant(inv_std), shape, 1));
    return channel_affine(xhat, gamma, beta);
  }

  if (shape[0] < 2) throw ShapeError("batchnorm: train mode needs a batch of at least 2, got " + shape_to_string(shape));
  ++train_forward_calls;
  const double count = static_cast<double>(x.numel() / shape[1]);
  Var mu = mul_scalar(reduce_to_axis(x, 1), 1.0 / count);
  Var centered = sub(x, broadcast_axis(mu, shape, 1));

  const Tensor& batch_mean = mu.value();
  for (std::size_t c = 0; c < running_mean.numel(); ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * batch_mean[c];
  }
  if (mean_only) return add(centered, broadcast_axis(beta, shape, 1));

  Var var = mul_scalar(reduce_to_axis(square(centered), 1), 1.0 / count);
  const Tensor& batch_var = var.value();
  for (std::size_t c = 0; c < running_var.numel(); ++c) {
    const double unbiased = batch_var[c] * count / (count - 1.0);
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
  }
  Var sigma = sqrt(add_scalar(var, eps));
  Var xhat = div(centered, broadcast_axis(sigma, shape, 1));
  return channel_affine(xhat, gamma, beta);
}

void BatchNorm::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  if (!mean_only) out.push_back({prefix + "gamma", gamma, ParamRole::Gamma});
  out.push_back({prefix + "beta", beta, ParamRole::Beta});
}

void BatchNorm::buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({prefix + "running_mean", &running_mean});
  if (!mean_only) out.push_back({prefix + "running_var", &running_var});
}

void BatchNorm::reset_parameters(CounterRng&) {
  fill(gamma, 1.0);
  fill(beta, 0.0);
  for (auto& v : running_mean.data()) v = 0.0;
  for (auto& v : running_var.data()) v = 1.0;
}

Var Sigmoid::forward(const Var& x, Mode) { return sigmoid(x); }

Var AvgPool2::forward(const Var& x, Mode) { return avg_pool2(x); }

Var UpsampleNearest2::forward(const Var& x, Mode) { return upsample_nearest2(x); }

// ---------------------------------------------------------------------------

Var Sequential::forward(const Var& x, Mode mode) {
  Var h = x;
  for (auto& layer : layers) h = layer->forward(h, mode);
  return h;
}

void Sequential::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i]->parameters(prefix + std::to_string(i) + ".", out);
}

void Sequential::buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i]->buffers(prefix + std::to_string(i) + ".", out);
}

void Sequential::reset_parameters(CounterRng& rng) {
  for (auto& layer : layers) layer->reset_parameters(rng);
}

WNAdd::WNAdd(std::size_t channels)
    : w1(Var::parameter(Tensor({channels}, 1.0))), w2(Var::parameter(Tensor({channels}, 0.0))) {}

Var WNAdd::forward(const Var& x1, const Var& x2) const {
  if (x1.shape() != x2.shape()) {
    throw ShapeError("wn_add: branch shapes " + shape_to_string(x1.shape()) + " and " + shape_to_string(x2.shape()) +
                     " differ");
  }
  require_channels(x1, w1.numel(), "wn_add");
  const Shape& shape = x1.shape();
  const std::size_t axis = channel_axis(shape);
  Var norm = sqrt(max_scalar(add(square(w1), square(w2)), eps));
  Var c1 = div(w1, norm);
  Var c2 = div(w2, norm);
  return add(mul(x1, broadcast_axis(c1, shape, axis)), mul(x2, broadcast_axis(c2, shape, axis)));
}

void WNAdd::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + "w1", w1, ParamRole::Mix});
  out.push_back({prefix + "w2", w2, ParamRole::Mix});
}

void WNAdd::reset_parameters() {
  fill(w1, 1.0);
  fill(w2, 0.0);
}

Var ResBlock::merge(const Var& x, Mode mode) {
  Var r = residue.forward(x, mode);
  Var s = shortcut.empty() ? x : shortcut.forward(x, mode);
  return wn_add ? wn_add->forward(s, r) : add(s, r);
}

Var ResBlock::forward(const Var& x, Mode mode) {
  Var y = merge(x, mode);
  return activation ? activation->forward(y, mode) : y;
}

void ResBlock::parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  residue.parameters(prefix + "residue.", out);
  shortcut.parameters(prefix + "shortcut.", out);
  if (wn_add) wn_add->parameters(prefix + "add.", out);
  if (activation) activation->parameters(prefix + "act.", out);
}

void ResBlock::buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  residue.buffers(prefix + "residue.", out);
  shortcut.buffers(prefix + "shortcut.", out);
  if (activation) activation->buffers(prefix + "act.", out);
}

void ResBlock::reset_parameters(CounterRng& rng) {
  residue.reset_parameters(rng);
  shortcut.reset_parameters(rng);
  if (wn_add) wn_add->reset_parameters();
  if (activation) activation->reset_parameters(rng);
}

}  // namespace wngan
