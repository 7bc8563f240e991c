#include "wngan/lipschitz.hpp"

#include <algorithm>
#include <cmath>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

constexpr std::uint64_t kBoundStream = 0xB0D;
constexpr std::uint64_t kProbeStream = 0x960BE;

LayerKind strict_counterpart(LayerKind k) {
  switch (k) {
    case LayerKind::AffineWNLinear: return LayerKind::StrictWNLinear;
    case LayerKind::AffineWNConv: return LayerKind::StrictWNConv;
    case LayerKind::AffineWNConvTranspose: return LayerKind::StrictWNConvTranspose;
    default: return k;
  }
}

double product_of(const std::vector<LayerDesc>& layers) {
  double f = 1.0;
  for (const auto& l : layers) f *= layer_factor(l);
  return f;
}

Shape batched(const Shape& s) {
  Shape out{1};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

double abs_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += std::abs(v);
  return s;
}

void randomize(Module& m, CounterRng& rng, bool tiny) {
  std::vector<NamedParam> params;
  m.parameters("", params);
  for (auto& p : params) {
    Var v = p.var;
    for (auto& x : v.mutable_value().data()) {
      switch (p.role) {
        case ParamRole::Slope: x = rng.uniform(); break;
        case ParamRole::Weight: x = rng.normal() * (tiny ? 1e-4 : 1.0); break;
        default: x = rng.normal(); break;
      }
    }
  }
}

/// One random trial; returns sum|dL/dx| / sum|dL/dy|.
double trial_ratio(const LayerDesc& layer, const Shape& input_shape, CounterRng& rng, bool tiny) {
  ModulePtr m = make_module(layer);
  randomize(*m, rng, tiny);
  Var x = Var::parameter(rng.normal_tensor(batched(input_shape)));
  Var y = m->forward(x, Mode::Inference);
  const Tensor g = rng.normal_tensor(y.shape());
  backward(sum(mul(y, Var::constant(g))));
  return abs_sum(x.grad()) / abs_sum(g);
}

LayerDesc desc(LayerKind kind, std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  LayerDesc d;
  d.kind = kind;
  d.in = in;
  d.out = out;
  d.kernel = k;
  d.stride = stride;
  d.pad = pad;
  return d;
}

}  // namespace

NetworkSpec make_critic(const NetworkSpec& disc) {
  if (disc.role != NetRole::Discriminator) throw ConfigError("make_critic: expects a discriminator spec");
  if (disc.variant != Variant::WN) {
    throw ConfigError("make_critic: expects a wn discriminator, got variant '" + to_string(disc.variant) + "'");
  }
  NetworkSpec c = disc;
  if (!c.layers.empty() && c.layers.back().kind == LayerKind::Sigmoid) c.layers.pop_back();
  if (c.layers.empty()) throw ConfigError("make_critic: spec has no layers besides the sigmoid");
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    if (is_affine_wn(c.layers[i].kind) && i + 1 != c.layers.size()) {
      throw ConfigError("make_critic: affine WN layer " + std::to_string(i) + " is not the output layer");
    }
  }
  c.layers.back().kind = strict_counterpart(c.layers.back().kind);
  c.critic = true;
  return c;
}

double layer_factor(const LayerDesc& l) {
  switch (l.kind) {
    case LayerKind::StrictWNLinear:
    case LayerKind::WNFullyConnectedToMap:
      return std::sqrt(static_cast<double>(l.in));
    case LayerKind::StrictWNConv:
    case LayerKind::StrictWNConvTranspose:
      return std::sqrt(static_cast<double>(l.in * l.kernel * l.kernel)) * static_cast<double>(l.stride);
    case LayerKind::PReLU:
    case LayerKind::TPReLU:
    case LayerKind::AvgPool2:
    case LayerKind::Upsample2:
      return 1.0;
    case LayerKind::ResBlock: {
      if (!l.block || l.block->variant != Variant::WN) {
        throw ConfigError("residual block without weight-normalized addition has no parameter-free bound");
      }
      const BlockLayout layout = expand_block(*l.block);
      const double fs = product_of(layout.shortcut);
      const double fr = product_of(layout.residue);
      const double fa = layout.activation ? layer_factor(*layout.activation) : 1.0;
      return std::sqrt(fs * fs + fr * fr) * fa;
    }
    default:
      throw ConfigError("layer '" + to_string(l.kind) + "' has no parameter-free Lipschitz bound");
  }
}

LipschitzBudget lipschitz_budget(const NetworkSpec& critic) {
  LipschitzBudget b;
  for (std::size_t i = 0; i < critic.layers.size(); ++i) {
    const double f = layer_factor(critic.layers[i]);
    b.factors.emplace_back(std::to_string(i) + ":" + to_string(critic.layers[i].kind), f);
    b.K *= f;
  }
  return b;
}

nlohmann::ordered_json LipschitzBudget::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json f = nlohmann::ordered_json::array();
  for (const auto& [name, v] : factors) f.push_back({{"layer", name}, {"factor", v}});
  j["factors"] = f;
  j["K"] = K;
  return j;
}

GradientBoundReport check_gradient_bound(const LayerDesc& layer, const Shape& input_shape, std::size_t trials,
                                         std::uint64_t seed) {
  GradientBoundReport r;
  r.layer = to_string(layer.kind);
  r.trials = trials;
  r.factor = layer_factor(layer);
  CounterRng rng(seed, kBoundStream);
  for (std::size_t t = 0; t < trials; ++t) {
    const double ratio = trial_ratio(layer, input_shape, rng, t % 4 == 3);
    r.max_ratio = std::max(r.max_ratio, ratio);
    if (ratio > r.factor * (1.0 + kBoundSlack)) ++r.violations;
  }
  r.passed = r.violations == 0;
  return r;
}

std::vector<std::string> bound_layer_names() {
  return {"strict_wn_linear", "strict_wn_conv", "strict_wn_conv_stride2", "strict_wn_conv_transpose", "tprelu"};
}

GradientBoundReport check_gradient_bound(const std::string& layer, std::size_t trials, std::uint64_t seed,
                                         std::size_t fan_in) {
  GradientBoundReport r;
  r.layer = layer;
  r.trials = trials;
  CounterRng rng(seed, kBoundStream);
  for (std::size_t t = 0; t < trials; ++t) {
    LayerDesc d;
    Shape in;
    if (layer == "strict_wn_linear") {
      const std::size_t n = fan_in ? fan_in : 1 + rng.below(16);
      d = desc(LayerKind::StrictWNLinear, n, 1 + rng.below(8), 0, 1, 0);
      in = {n};
    } else if (layer == "strict_wn_conv") {
      const std::size_t c = 1 + rng.below(4);
      const std::size_t k = rng.below(2) ? 3 : 1;
      d = desc(LayerKind::StrictWNConv, c, 1 + rng.below(4), k, 1, rng.below(2));
      const std::size_t s = 5 + rng.below(4);
      in = {c, s, s};
    } else if (layer == "strict_wn_conv_stride2") {
      const std::size_t c = 1 + rng.below(4);
      d = desc(LayerKind::StrictWNConv, c, 1 + rng.below(4), 4, 2, 1);
      const std::size_t s = 4 + 2 * rng.below(3);
      in = {c, s, s};
    } else if (layer == "strict_wn_conv_transpose") {
      const std::size_t c = 1 + rng.below(4);
      const std::size_t stride = 1 + rng.below(2);
      d = desc(LayerKind::StrictWNConvTranspose, c, 1 + rng.below(4), stride == 2 ? 4 : 3, stride, 1);
      const std::size_t s = 2 + rng.below(4);
      in = {c, s, s};
    } else if (layer == "tprelu") {
      const std::size_t c = 1 + rng.below(6);
      d = desc(LayerKind::TPReLU, c, c, 0, 1, 0);
      in = rng.below(2) ? Shape{c} : Shape{c, 3, 3};
    } else {
      throw ConfigError("unknown layer '" + layer + "' for the gradient bound check");
    }
    const double factor = layer_factor(d);
    const double ratio = trial_ratio(d, in, rng, t % 4 == 3);
    // Shapes vary per trial, so report the ratio relative to each trial's
    // own bound, scaled back by the largest factor seen.
    r.factor = std::max(r.factor, factor);
    r.max_ratio = std::max(r.max_ratio, ratio);
    if (ratio > factor * (1.0 + kBoundSlack)) ++r.violations;
  }
  r.passed = r.violations == 0;
  return r;
}

nlohmann::ordered_json GradientBoundReport::to_json() const {
  nlohmann::ordered_json j;
  j["layer"] = layer;
  j["trials"] = trials;
  j["factor"] = factor;
  j["max_ratio"] = max_ratio;
  j["violations"] = violations;
  j["passed"] = passed;
  return j;
}

ProbeReport empirical_lipschitz(const BatchScalarFn& f, const Shape& input_shape, std::size_t pairs, double budget,
                                std::uint64_t seed) {
  ProbeReport r;
  r.pairs = pairs;
  r.budget = budget;
  CounterRng rng(seed, kProbeStream);
  const std::size_t per = shape_numel(input_shape);
  constexpr std::size_t kChunk = 512;
  for (std::size_t done = 0; done < pairs;) {
    const std::size_t m = std::min(kChunk, pairs - done);
    Shape shape{m};
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    Tensor x1 = rng.uniform_tensor(shape, 0.0, 1.0);
    Tensor x2(shape);
    std::vector<double> dist(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const bool local = (done + i) % 2 == 1;
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t k = i * per + j;
        x2[k] = local ? x1[k] + rng.uniform(-1e-2, 1e-2) : rng.uniform();
        dist[i] = std::max(dist[i], std::abs(x1[k] - x2[k]));
      }
    }
    const Tensor f1 = f(x1);
    const Tensor f2 = f(x2);
    if (f1.numel() != m || f2.numel() != m) throw ShapeError("empirical_lipschitz: function must return one value per row");
    for (std::size_t i = 0; i < m; ++i) {
      if (dist[i] == 0.0) {
        ++r.skipped;
        continue;
      }
      r.max_ratio = std::max(r.max_ratio, std::abs(f1[i] - f2[i]) / dist[i]);
    }
    done += m;
  }
  r.passed = r.max_ratio <= budget;
  return r;
}

ProbeReport empirical_lipschitz(Network& critic, std::size_t pairs, std::uint64_t seed) {
  const double K = lipschitz_budget(critic.spec()).K;
  auto f = [&critic](const Tensor& x) { return critic.forward(Var::constant(x), Mode::Inference).value(); };
  return empirical_lipschitz(f, critic.spec().input_shape(), pairs, K, seed);
}

std::vector<Shape> layer_input_shapes(Network& net) {
  std::vector<Shape> shapes;
  Var x = Var::constant(Tensor(batched(net.spec().input_shape())));
  for (auto& layer : net.body().layers) {
    shapes.emplace_back(x.shape().begin() + 1, x.shape().end());
    x = layer->forward(x, Mode::Inference);
  }
  return shapes;
}

nlohmann::ordered_json ProbeReport::to_json() const {
  nlohmann::ordered_json j;
  j["pairs"] = pairs;
  j["skipped"] = skipped;
  j["max_ratio"] = max_ratio;
  j["budget_K"] = budget;
  j["passed"] = passed;
  return j;
}

}  // namespace wngan
