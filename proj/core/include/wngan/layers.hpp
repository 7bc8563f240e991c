#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "wngan/autodiff.hpp"
#include "wngan/rng.hpp"

namespace wngan {

enum class Mode { Train, Inference };

/// What a parameter is for; optimizers' post-step hooks dispatch on it.
enum class ParamRole { Weight, Bias, Gamma, Beta, Alpha, Slope, Mix };

struct NamedParam {
  std::string name;
  Var var;
  ParamRole role;
};

/// Non-learned state that still belongs in a checkpoint (BN running stats).
struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Added to the squared weight norm before the square root.
inline constexpr double kWeightNormEps = 1e-6;
/// Added to the batch variance inside BN's standard deviation.
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kPReLUInitSlope = 0.25;

class Module {
 public:
  virtual ~Module() = default;

  virtual Var forward(const Var& x, Mode mode) = 0;
  virtual std::string kind() const = 0;

  virtual void parameters(const std::string& /*prefix*/, std::vector<NamedParam>& /*out*/) {}
  virtual void buffers(const std::string& /*prefix*/, std::vector<NamedBuffer>& /*out*/) {}
  /// Draws fresh initial values from `rng` using the layer's init rule.
  virtual void reset_parameters(CounterRng& /*rng*/) {}
};

using ModulePtr = std::unique_ptr<Module>;

/// Channel axis of an activation: 0 for an unbatched vector, else 1.
std::size_t channel_axis(const Shape& shape);

/// Per-output-channel divisor sqrt(sum k^2 + eps) / sqrt(stride_h * stride_w),
/// summing over every kernel axis except `out_axis`.
Var weight_norm_divisor(const Var& kernel, std::size_t out_axis, std::size_t stride_h, std::size_t stride_w,
                        double eps = kWeightNormEps);
/// kernel divided by weight_norm_divisor along `out_axis`.
Var normalize_weight(const Var& kernel, std::size_t out_axis, std::size_t stride_h = 1, std::size_t stride_w = 1,
                     double eps = kWeightNormEps);
/// x * gamma + beta with gamma, beta broadcast along the channel axis of x.
Var channel_affine(const Var& x, const Var& gamma, const Var& beta);

// ---------------------------------------------------------------------------
// Fully connected layers

/// y = W x + b.
class Linear final : public Module {
 public:
  Linear(std::size_t in, std::size_t out);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "linear"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var weight;  // [out, in]
  Var bias;    // [out]
};

/// y_i = w_i . x / sqrt(|w_i|^2 + eps). No bias, scale or shift exists.
class StrictWNLinear final : public Module {
 public:
  StrictWNLinear(std::size_t in, std::size_t out);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "strict_wn_linear"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var weight;  // [out, in]
  /// Multiplies the +-1/sqrt(in) init range; the first generator layer uses 0.01.
  double init_scale = 1.0;
  double eps = kWeightNormEps;
};

/// Strict weight-normalized projection followed by a learned gamma, beta.
class AffineWNLinear final : public Module {
 public:
  AffineWNLinear(std::size_t in, std::size_t out);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "affine_wn_linear"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var weight;  // [out, in]
  Var gamma;   // [out]
  Var beta;    // [out]
  double eps = kWeightNormEps;
};

// ---------------------------------------------------------------------------
// Convolutions. Kernels of forward convolutions are [c_out, c_in, k, k];
// transposed kernels are [c_in, c_out, k, k] so that both directions share
// one kernel tensor for an adjoint pair.

class Conv2d final : public Module {
 public:
  Conv2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, ConvGeometry geometry);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "conv2d"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var kernel;
  Var bias;
  ConvGeometry geometry;
};

/// Accepts [N, C] inputs as [N, C, 1, 1] maps.
class ConvTranspose2d final : public Module {
 public:
  ConvTranspose2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, ConvGeometry geometry);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "conv_transpose2d"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var kernel;
  Var bias;
  ConvGeometry geometry;
};

enum class WNMode { Strict, Affine };

/// Weight-normalized convolution. The per-channel kernel norm is divided by
/// sqrt(stride_h * stride_w) before it normalizes the kernel, which
/// approximates normalizing each stride subset of the kernel separately.
class WNConv2d final : public Module {
 public:
  WNConv2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, ConvGeometry geometry, WNMode mode);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return mode == WNMode::Strict ? "strict_wn_conv2d" : "affine_wn_conv2d"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;
  /// The kernel actually convolved with the input.
  Var effective_kernel() const;

  Var kernel;  // [c_out, c_in, k, k]
  Var gamma;   // [c_out], affine mode only
  Var beta;    // [c_out], affine mode only
  ConvGeometry geometry;
  WNMode mode;
  double eps = kWeightNormEps;
};

class WNConvTranspose2d final : public Module {
 public:
  WNConvTranspose2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, ConvGeometry geometry, WNMode mode);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override {
    return mode == WNMode::Strict ? "strict_wn_conv_transpose2d" : "affine_wn_conv_transpose2d";
  }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;
  Var effective_kernel() const;

  Var kernel;  // [c_in, c_out, k, k]
  Var gamma;
  Var beta;
  ConvGeometry geometry;
  WNMode mode;
  double eps = kWeightNormEps;
};

/// First generator layer: a strict weight-normalized fully connected layer
/// from the latent code to channels*height*width units (each row normalized
/// over the code only), reshaped to a [channels, height, width] map.
class WNFullyConnectedToMap final : public Module {
 public:
  WNFullyConnectedToMap(std::size_t latent_dim, std::size_t channels, std::size_t height, std::size_t width);
  Var forward(const Var& z, Mode mode) override;
  std::string kind() const override { return "wn_fc_to_map"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  StrictWNLinear fc;
  std::size_t channels;
  std::size_t height;
  std::size_t width;
};

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

/// Parametric ReLU with a learned per-channel translation alpha:
/// y = x for x >= alpha, slope * (x - alpha) + alpha otherwise.
/// With `translated == false` alpha is pinned at 0 (plain PReLU).
class TPReLU final : public Module {
 public:
  TPReLU(std::size_t channels, bool translated);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return translated ? "tprelu" : "prelu"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var alpha;  // [channels]
  Var slope;  // [channels]
  bool translated;
};

class BatchNorm final : public Module {
 public:
  BatchNorm(std::size_t channels, bool mean_only);
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return mean_only ? "mean_only_batchnorm" : "batchnorm"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  void reset_parameters(CounterRng& rng) override;

  Var gamma;  // unused when mean_only
  Var beta;
  Tensor running_mean;
  /// Updated with the unbiased batch variance.
  Tensor running_var;
  double momentum = kBatchNormMomentum;
  double eps = kBatchNormEps;
  bool mean_only;
  std::size_t train_forward_calls = 0;
};

class Sigmoid final : public Module {
 public:
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "sigmoid"; }
};

class AvgPool2 final : public Module {
 public:
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "avg_pool2"; }
};

class UpsampleNearest2 final : public Module {
 public:
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "upsample_nearest2"; }
};

class Sequential final : public Module {
 public:
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "sequential"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  void reset_parameters(CounterRng& rng) override;

  void push(ModulePtr m) { layers.push_back(std::move(m)); }
  bool empty() const { return layers.empty(); }

  std::vector<ModulePtr> layers;
};

/// Weight-normalized addition of two branches, per channel:
/// y = (w1 x1 + w2 x2) / sqrt(max(w1^2 + w2^2, eps)).
/// x1 is the shortcut branch (init weight 1), x2 the residue (init 0).
class WNAdd {
 public:
  explicit WNAdd(std::size_t channels);
  Var forward(const Var& x1, const Var& x2) const;
  void parameters(const std::string& prefix, std::vector<NamedParam>& out);
  void reset_parameters();

  Var w1;  // [channels]
  Var w2;  // [channels]
  double eps = kWeightNormEps;
};

/// Residual block: shortcut and residue branches merged by a plain sum
/// (vanilla, bn) or a WNAdd (wn), followed by an optional activation.
class ResBlock final : public Module {
 public:
  Var forward(const Var& x, Mode mode) override;
  std::string kind() const override { return "resblock"; }
  void parameters(const std::string& prefix, std::vector<NamedParam>& out) override;
  void buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  void reset_parameters(CounterRng& rng) override;

  /// Output of the merge, before the trailing activation.
  Var merge(const Var& x, Mode mode);

  Sequential residue;
  Sequential shortcut;
  std::unique_ptr<WNAdd> wn_add;
  ModulePtr activation;
};

}  // namespace wngan
