#include "wngan/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <functional>
#include <map>
#include <memory>

#include "wngan/errors.hpp"
#include "wngan/layers.hpp"
#include "wngan/network.hpp"
#include "wngan/rng.hpp"

namespace wngan {

namespace {

constexpr std::uint64_t kSuiteStream = 0x62AD;

struct Leaf {
  std::string name;
  Var var;
};

/// A differentiable computation with its leaves. `keep` owns whatever the
/// closure refers to (modules, mostly).
struct Case {
  std::vector<Leaf> leaves;
  std::function<Var()> output;
  std::shared_ptr<void> keep;
};

using CaseFactory = std::function<Case(CounterRng&)>;

Tensor positive_tensor(CounterRng& rng, const Shape& s) { return rng.uniform_tensor(s, 0.5, 2.0); }

void randomize_params(Module& m, CounterRng& rng, std::vector<Leaf>& leaves) {
  std::vector<NamedParam> params;
  m.parameters("", params);
  for (auto& p : params) {
    Var v = p.var;
    for (auto& x : v.mutable_value().data()) {
      x = p.role == ParamRole::Slope ? rng.uniform(0.05, 0.95) : rng.normal();
    }
    if (v.requires_grad()) leaves.push_back({p.name, v});
  }
}

Case module_case(ModulePtr module, Shape input, CounterRng& rng, Mode mode = Mode::Inference) {
  Case c;
  std::shared_ptr<Module> m(std::move(module));
  randomize_params(*m, rng, c.leaves);
  Var x = Var::parameter(rng.normal_tensor(input));
  c.leaves.insert(c.leaves.begin(), {"x", x});
  c.output = [m, x, mode] { return m->forward(x, mode); };
  c.keep = m;
  return c;
}

LayerDesc desc(LayerKind kind, std::size_t in, std::size_t out, std::size_t k = 0, std::size_t stride = 1,
               std::size_t pad = 0) {
  LayerDesc d;
  d.kind = kind;
  d.in = in;
  d.out = out;
  d.kernel = k;
  d.stride = stride;
  d.pad = pad;
  return d;
}

Case layer_case(const LayerDesc& d, Shape input, CounterRng& rng, Mode mode = Mode::Inference) {
  return module_case(make_module(d), std::move(input), rng, mode);
}

Case block_case(bool transposed, Variant variant, CounterRng& rng) {
  LayerDesc d;
  d.kind = LayerKind::ResBlock;
  d.in = 2;
  d.out = 3;
  d.block = ResBlockSpec{2, 2, 3, variant, transposed, false};
  const std::size_t s = transposed ? 2 : 4;
  return layer_case(d, {2, 2, s, s}, rng, variant == Variant::BN ? Mode::Train : Mode::Inference);
}

Case unary_op(std::function<Var(const Var&)> op, Tensor x) {
  Case c;
  Var v = Var::parameter(std::move(x));
  c.leaves = {{"x", v}};
  c.output = [op, v] { return op(v); };
  return c;
}

Case binary_op(std::function<Var(const Var&, const Var&)> op, Tensor a, Tensor b) {
  Case c;
  Var va = Var::parameter(std::move(a));
  Var vb = Var::parameter(std::move(b));
  c.leaves = {{"a", va}, {"b", vb}};
  c.output = [op, va, vb] { return op(va, vb); };
  return c;
}

const std::map<std::string, CaseFactory>& registry() {
  static const std::map<std::string, CaseFactory> cases = {
      // Layers
      {"linear", [](CounterRng& r) { return layer_case(desc(LayerKind::Linear, 4, 3), {2, 4}, r); }},
      {"strict_wn_linear",
       [](CounterRng& r) { return layer_case(desc(LayerKind::StrictWNLinear, 4, 3), {2, 4}, r); }},
      {"affine_wn_linear",
       [](CounterRng& r) { return layer_case(desc(LayerKind::AffineWNLinear, 4, 3), {2, 4}, r); }},
      {"conv", [](CounterRng& r) { return layer_case(desc(LayerKind::Conv, 2, 3, 3, 1, 1), {2, 2, 4, 4}, r); }},
      {"conv_transpose",
       [](CounterRng& r) { return layer_case(desc(LayerKind::ConvTranspose, 2, 3, 4, 2, 1), {2, 2, 3, 3}, r); }},
      {"strict_wn_conv",
       [](CounterRng& r) { return layer_case(desc(LayerKind::StrictWNConv, 2, 3, 3, 1, 1), {2, 2, 4, 4}, r); }},
      {"strict_wn_conv_stride2",
       [](CounterRng& r) { return layer_case(desc(LayerKind::StrictWNConv, 2, 3, 4, 2, 1), {2, 2, 4, 4}, r); }},
      {"affine_wn_conv",
       [](CounterRng& r) { return layer_case(desc(LayerKind::AffineWNConv, 2, 3, 3, 1, 1), {2, 2, 4, 4}, r); }},
      {"strict_wn_conv_transpose",
       [](CounterRng& r) {
         return layer_case(desc(LayerKind::StrictWNConvTranspose, 2, 3, 4, 2, 1), {2, 2, 3, 3}, r);
       }},
      {"affine_wn_conv_transpose",
       [](CounterRng& r) {
         return layer_case(desc(LayerKind::AffineWNConvTranspose, 2, 3, 4, 2, 1), {2, 2, 3, 3}, r);
       }},
      {"wn_fc_to_map",
       [](CounterRng& r) {
         LayerDesc d = desc(LayerKind::WNFullyConnectedToMap, 3, 2);
         d.height = 2;
         d.width = 2;
         return layer_case(d, {2, 3}, r);
       }},
      {"tprelu", [](CounterRng& r) { return layer_case(desc(LayerKind::TPReLU, 3, 3), {2, 3, 2, 2}, r); }},
      {"prelu", [](CounterRng& r) { return layer_case(desc(LayerKind::PReLU, 3, 3), {2, 3, 2, 2}, r); }},
      {"batchnorm",
       [](CounterRng& r) { return layer_case(desc(LayerKind::BatchNorm, 3, 3), {3, 3, 2, 2}, r, Mode::Train); }},
      {"mean_only_batchnorm",
       [](CounterRng& r) {
         return layer_case(desc(LayerKind::MeanOnlyBatchNorm, 3, 3), {3, 3, 2, 2}, r, Mode::Train);
       }},
      {"sigmoid", [](CounterRng& r) { return layer_case(desc(LayerKind::Sigmoid, 1, 1), {2, 5}, r); }},
      {"avg_pool2", [](CounterRng& r) { return layer_case(desc(LayerKind::AvgPool2, 1, 1), {2, 2, 4, 4}, r); }},
      {"upsample2",
       [](CounterRng& r) { return layer_case(desc(LayerKind::Upsample2, 1, 1), {2, 2, 2, 2}, r); }},
      {"wn_add",
       [](CounterRng& r) {
         Case c;
         auto add = std::make_shared<WNAdd>(3);
         Var x1 = Var::parameter(r.normal_tensor({2, 3, 2, 2}));
         Var x2 = Var::parameter(r.normal_tensor({2, 3, 2, 2}));
         Var w1 = add->w1;
         Var w2 = add->w2;
         for (auto& v : w1.mutable_value().data()) v = r.normal();
         for (auto& v : w2.mutable_value().data()) v = r.normal();
         c.leaves = {{"x1", x1}, {"x2", x2}, {"w1", w1}, {"w2", w2}};
         c.output = [add, x1, x2] { return add->forward(x1, x2); };
         c.keep = add;
         return c;
       }},
      {"resblock_down_wn", [](CounterRng& r) { return block_case(false, Variant::WN, r); }},
      {"resblock_up_wn", [](CounterRng& r) { return block_case(true, Variant::WN, r); }},
      {"resblock_down_bn", [](CounterRng& r) { return block_case(false, Variant::BN, r); }},
      {"resblock_up_vanilla", [](CounterRng& r) { return block_case(true, Variant::Vanilla, r); }},
      // Tensor ops
      {"op_add", [](CounterRng& r) { return binary_op(add, r.normal_tensor({3, 2}), r.normal_tensor({3, 2})); }},
      {"op_sub", [](CounterRng& r) { return binary_op(sub, r.normal_tensor({3, 2}), r.normal_tensor({3, 2})); }},
      {"op_mul", [](CounterRng& r) { return binary_op(mul, r.normal_tensor({3, 2}), r.normal_tensor({3, 2})); }},
      {"op_mul_scalar_broadcast",
       [](CounterRng& r) { return binary_op(mul, r.normal_tensor({3, 2}), r.normal_tensor({})); }},
      {"op_div",
       [](CounterRng& r) { return binary_op(div, r.normal_tensor({3, 2}), positive_tensor(r, {3, 2})); }},
      {"op_neg", [](CounterRng& r) { return unary_op(neg, r.normal_tensor({4})); }},
      {"op_add_scalar",
       [](CounterRng& r) { return unary_op([](const Var& a) { return add_scalar(a, 0.7); }, r.normal_tensor({4})); }},
      {"op_mul_scalar",
       [](CounterRng& r) { return unary_op([](const Var& a) { return mul_scalar(a, -1.3); }, r.normal_tensor({4})); }},
      {"op_square", [](CounterRng& r) { return unary_op(square, r.normal_tensor({4})); }},
      {"op_sqrt", [](CounterRng& r) { return unary_op(wngan::sqrt, positive_tensor(r, {4})); }},
      {"op_sigmoid", [](CounterRng& r) { return unary_op(sigmoid, r.normal_tensor({4})); }},
      {"op_softplus", [](CounterRng& r) { return unary_op(softplus, r.normal_tensor({4})); }},
      {"op_max_scalar",
       [](CounterRng& r) { return unary_op([](const Var& a) { return max_scalar(a, 0.1); }, r.normal_tensor({6})); }},
      {"op_sum", [](CounterRng& r) { return unary_op(sum, r.normal_tensor({2, 3})); }},
      {"op_mean", [](CounterRng& r) { return unary_op(mean, r.normal_tensor({2, 3})); }},
      {"op_matmul",
       [](CounterRng& r) { return binary_op(matmul, r.normal_tensor({2, 3}), r.normal_tensor({3, 4})); }},
      {"op_linear",
       [](CounterRng& r) { return binary_op(linear, r.normal_tensor({2, 3}), r.normal_tensor({4, 3})); }},
      {"op_conv2d",
       [](CounterRng& r) {
         return binary_op([](const Var& x, const Var& w) { return conv2d(x, w, ConvGeometry::square(2, 1)); },
                          r.normal_tensor({1, 2, 5, 5}), r.normal_tensor({3, 2, 3, 3}));
       }},
      {"op_conv2d_transposed",
       [](CounterRng& r) {
         return binary_op(
             [](const Var& x, const Var& w) { return conv2d_transposed(x, w, ConvGeometry::square(2, 1)); },
             r.normal_tensor({1, 3, 3, 3}), r.normal_tensor({3, 2, 4, 4}));
       }},
      {"op_avg_pool2", [](CounterRng& r) { return unary_op(avg_pool2, r.normal_tensor({1, 2, 4, 4})); }},
      {"op_upsample_nearest2",
       [](CounterRng& r) { return unary_op(upsample_nearest2, r.normal_tensor({1, 2, 2, 3})); }},
      {"op_reshape",
       [](CounterRng& r) {
         return unary_op([](const Var& a) { return reshape(a, {3, 2}); }, r.normal_tensor({2, 3}));
       }},
      {"op_reduce_to_axis",
       [](CounterRng& r) {
         return unary_op([](const Var& a) { return reduce_to_axis(a, 1); }, r.normal_tensor({2, 3, 2}));
       }},
      {"op_broadcast_axis",
       [](CounterRng& r) {
         return unary_op([](const Var& a) { return broadcast_axis(a, {2, 3, 2}, 1); }, r.normal_tensor({3}));
       }},
      {"op_translated_prelu",
       [](CounterRng& r) {
         Case c;
         Var x = Var::parameter(r.normal_tensor({2, 3, 2}));
         Var alpha = Var::parameter(r.normal_tensor({3}));
         Var slope = Var::parameter(r.uniform_tensor({3}, 0.05, 0.95));
         c.leaves = {{"x", x}, {"alpha", alpha}, {"slope", slope}};
         c.output = [x, alpha, slope] { return translated_prelu(x, alpha, slope, 1); };
         return c;
       }},
  };
  return cases;
}

constexpr std::size_t kMaxMismatches = 8;

void run_trial(const Case& c, CounterRng& rng, double h, GradTolerance tol, std::size_t trial,
               GradCaseReport& rep) {
  const Tensor g = rng.normal_tensor(c.output().shape());
  for (const auto& leaf : c.leaves) Var(leaf.var).zero_grad();
  backward(sum(mul(c.output(), Var::constant(g))));
  bool ok = true;
  for (const auto& leaf : c.leaves) {
    if (std::find(rep.leaves.begin(), rep.leaves.end(), leaf.name) == rep.leaves.end()) rep.leaves.push_back(leaf.name);
    Var v = leaf.var;
    const Tensor analytic = v.grad();
    const Tensor original = v.value();
    const VectorFn f = [&](const Tensor& t) {
      v.mutable_value() = t;
      return c.output().value();
    };
    const Tensor numeric = finite_diff_readout_grad(f, g, original, h);
    v.mutable_value() = original;
    const GradComparison cmp = compare_gradients(analytic, numeric, tol);
    if (!cmp.passed && rep.mismatches.size() < kMaxMismatches) {
      const Tensor wide = finite_diff_readout_grad(f, g, original, 100.0 * h);
      v.mutable_value() = original;
      for (std::size_t i = 0; i < analytic.numel() && rep.mismatches.size() < kMaxMismatches; ++i) {
        const double a = analytic[i];
        const double diff = std::abs(a - numeric[i]);
        const bool bad = std::abs(a) < tol.small ? diff > tol.abs : diff > tol.rel * std::abs(a);
        if (bad) rep.mismatches.push_back({trial, leaf.name, i, a, numeric[i], wide[i]});
      }
    }
    if (cmp.max_rel_error > rep.max_rel_error) {
      rep.max_rel_error = cmp.max_rel_error;
      rep.worst_leaf = leaf.name;
    }
    rep.max_abs_error = std::max(rep.max_abs_error, cmp.max_abs_error);
    ok = ok && cmp.passed;
  }
  if (!ok) ++rep.failures;
}

}  // namespace

std::vector<std::string> gradient_case_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

GradSuiteReport run_gradient_suite(std::size_t trials, std::uint64_t seed, const std::optional<std::string>& only,
                                   double h, GradTolerance tol) {
  const auto start = std::chrono::steady_clock::now();
  const auto& cases = registry();
  if (only && !cases.count(*only)) throw ConfigError("unknown gradient case '" + *only + "'");
  GradSuiteReport report;
  report.h = h;
  report.tolerance = tol;
  std::uint64_t index = 0;
  for (const auto& [name, factory] : cases) {
    ++index;
    if (only && name != *only) continue;
    CounterRng rng(seed, kSuiteStream + index);
    GradCaseReport rep;
    rep.name = name;
    rep.trials = trials;
    for (std::size_t t = 0; t < trials; ++t) run_trial(factory(rng), rng, h, tol, t, rep);
    rep.passed = rep.failures == 0;
    report.passed = report.passed && rep.passed;
    report.cases.push_back(std::move(rep));
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::ordered_json GradCaseReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["trials"] = trials;
  j["failures"] = failures;
  j["max_rel_error"] = max_rel_error;
  j["max_abs_error"] = max_abs_error;
  j["worst_leaf"] = worst_leaf;
  j["leaves"] = leaves;
  if (!mismatches.empty()) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& m : mismatches) {
      arr.push_back({{"trial", m.trial},
                     {"leaf", m.leaf},
                     {"index", m.index},
                     {"analytic", m.analytic},
                     {"numeric", m.numeric},
                     {"numeric_100h", m.numeric_wide}});
    }
    j["mismatches"] = arr;
  }
  j["passed"] = passed;
  return j;
}

nlohmann::ordered_json GradSuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["h"] = h;
  j["rel_tolerance"] = tolerance.rel;
  j["small_threshold"] = tolerance.small;
  j["abs_tolerance"] = tolerance.abs;
  j["wall_ms"] = wall_ms;
  j["passed"] = passed;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : cases) arr.push_back(c.to_json());
  j["cases"] = arr;
  return j;
}

}  // namespace wngan
