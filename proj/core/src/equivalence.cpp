#include "wngan/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

Tensor row_norms(const Tensor& w, double eps, const char* where) {
  const std::size_t rows = w.dim(0);
  const std::size_t cols = w.dim(1);
  Tensor n({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += w[i * cols + j] * w[i * cols + j];
    if (s == 0.0) throw NumericError(std::string(where) + ": weight row " + std::to_string(i) + " has zero norm");
    n[i] = std::sqrt(s + eps);
  }
  return n;
}

/// w diag(d): scales column j by d[j].
Tensor scale_columns(const Tensor& w, const Tensor& d) {
  Tensor out = w;
  const std::size_t cols = w.dim(1);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= d[i % cols];
  return out;
}

/// diag(d) w: scales row i by d[i].
Tensor scale_rows(const Tensor& w, const Tensor& d) {
  Tensor out = w;
  const std::size_t cols = w.dim(1);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= d[i / cols];
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& v) {
  const std::size_t rows = w.dim(0);
  const std::size_t cols = w.dim(1);
  Tensor out({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += w[i * cols + j] * v[j];
    out[i] = s;
  }
  return out;
}

Tensor elementwise(const Tensor& a, const Tensor& b, double (*op)(double, double)) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = op(a[i], b[i]);
  return out;
}

double max_diff_lists(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) return std::numeric_limits<double>::infinity();
    m = std::max(m, max_abs_diff(a[i], b[i]));
  }
  return m;
}

void check_vanilla(const VanillaStack& s) {
  const std::size_t n = s.hidden_layers();
  if (s.weights.size() != n + 1 || s.biases.size() != n + 1) {
    throw ConfigError("vanilla stack needs n+1 linear layers for n activations");
  }
  for (std::size_t k = 0; k <= n; ++k) {
    if (s.weights[k].rank() != 2 || s.biases[k].shape() != Shape{s.weights[k].dim(0)}) {
      throw ShapeError("vanilla stack layer " + std::to_string(k) + " has inconsistent weight/bias shapes");
    }
    if (k > 0 && s.weights[k].dim(1) != s.weights[k - 1].dim(0)) {
      throw ShapeError("vanilla stack layer " + std::to_string(k) + " input width does not match previous output");
    }
    if (k < n && s.slopes[k].shape() != s.biases[k].shape()) {
      throw ShapeError("vanilla stack activation " + std::to_string(k) + " has the wrong channel count");
    }
  }
}

void check_wn(const WNStack& s) {
  const std::size_t n = s.hidden_layers();
  if (s.weights.size() != n + 1 || s.alphas.size() != n) {
    throw ConfigError("wn stack needs n+1 weight layers and n alphas for n activations");
  }
  for (std::size_t k = 0; k <= n; ++k) {
    if (s.weights[k].rank() != 2) throw ShapeError("wn stack weight " + std::to_string(k) + " is not a matrix");
    if (k > 0 && s.weights[k].dim(1) != s.weights[k - 1].dim(0)) {
      throw ShapeError("wn stack layer " + std::to_string(k) + " input width does not match previous output");
    }
    if (k < n && (s.alphas[k].shape() != Shape{s.weights[k].dim(0)} || s.slopes[k].shape() != s.alphas[k].shape())) {
      throw ShapeError("wn stack activation " + std::to_string(k) + " has the wrong channel count");
    }
  }
  const Shape out{s.weights.back().dim(0)};
  if (s.gamma.shape() != out || s.beta.shape() != out) throw ShapeError("wn stack gamma/beta shape mismatch");
}

Tensor random_normal(CounterRng& rng, Shape shape, double stddev) { return rng.normal_tensor(std::move(shape), 0.0, stddev); }

}  // namespace

Tensor forward(const VanillaStack& stack, const Tensor& x) {
  check_vanilla(stack);
  Var h = Var::constant(x);
  for (std::size_t k = 0; k <= stack.hidden_layers(); ++k) {
    Linear lin(stack.weights[k].dim(1), stack.weights[k].dim(0));
    lin.weight.mutable_value() = stack.weights[k];
    lin.bias.mutable_value() = stack.biases[k];
    h = lin.forward(h, Mode::Inference);
    if (k < stack.hidden_layers()) {
      TPReLU act(stack.slopes[k].numel(), false);
      act.slope.mutable_value() = stack.slopes[k];
      h = act.forward(h, Mode::Inference);
    }
  }
  return h.value();
}

Tensor forward(const WNStack& stack, const Tensor& x) {
  check_wn(stack);
  Var h = Var::constant(x);
  const std::size_t n = stack.hidden_layers();
  for (std::size_t k = 0; k < n; ++k) {
    StrictWNLinear lin(stack.weights[k].dim(1), stack.weights[k].dim(0));
    lin.weight.mutable_value() = stack.weights[k];
    lin.eps = stack.eps;
    h = lin.forward(h, Mode::Inference);
    TPReLU act(stack.slopes[k].numel(), true);
    act.alpha.mutable_value() = stack.alphas[k];
    act.slope.mutable_value() = stack.slopes[k];
    h = act.forward(h, Mode::Inference);
  }
  AffineWNLinear last(stack.weights[n].dim(1), stack.weights[n].dim(0));
  last.weight.mutable_value() = stack.weights[n];
  last.gamma.mutable_value() = stack.gamma;
  last.beta.mutable_value() = stack.beta;
  last.eps = stack.eps;
  return last.forward(h, Mode::Inference).value();
}

WNStack vanilla_to_wn(const VanillaStack& stack, double eps) {
  check_vanilla(stack);
  WNStack out;
  out.eps = eps;
  // (w_t, b_t) is the current layer after absorbing the previous layer's norms.
  Tensor w_t = stack.weights[0];
  Tensor b_t = stack.biases[0];
  for (std::size_t k = 0; k < stack.hidden_layers(); ++k) {
    const Tensor n = row_norms(w_t, eps, "vanilla_to_wn");
    out.weights.push_back(w_t);
    out.alphas.push_back(elementwise(b_t, n, [](double b, double nk) { return -b / nk; }));
    out.slopes.push_back(stack.slopes[k]);
    const Tensor& w_next = stack.weights[k + 1];
    Tensor b_next = elementwise(stack.biases[k + 1], matvec(w_next, b_t), [](double a, double b) { return a + b; });
    w_t = scale_columns(w_next, n);
    b_t = std::move(b_next);
  }
  out.gamma = row_norms(w_t, eps, "vanilla_to_wn");
  out.weights.push_back(std::move(w_t));
  out.beta = std::move(b_t);
  return out;
}

VanillaStack wn_to_vanilla(const WNStack& stack) {
  check_wn(stack);
  VanillaStack out;
  const std::size_t n = stack.hidden_layers();
  Tensor prev_norm;
  Tensor prev_b_t;  // shifted bias of the previous layer, -norm * alpha
  for (std::size_t k = 0; k <= n; ++k) {
    const Tensor norm = row_norms(stack.weights[k], stack.eps, "wn_to_vanilla");
    Tensor w_t = stack.weights[k];
    Tensor b_t;
    if (k < n) {
      b_t = elementwise(norm, stack.alphas[k], [](double nk, double a) { return -nk * a; });
    } else {
      w_t = scale_rows(w_t, elementwise(stack.gamma, norm, [](double g, double nk) { return g / nk; }));
      b_t = stack.beta;
    }
    Tensor w = w_t;
    Tensor b = b_t;
    if (k > 0) {
      w = scale_columns(w_t, elementwise(prev_norm, prev_norm, [](double a, double) { return 1.0 / a; }));
      b = elementwise(b_t, matvec(w, prev_b_t), [](double a, double c) { return a - c; });
    }
    out.weights.push_back(std::move(w));
    out.biases.push_back(std::move(b));
    if (k < n) out.slopes.push_back(stack.slopes[k]);
    prev_norm = norm;
    prev_b_t = std::move(b_t);
  }
  return out;
}

LemmaParams lemma_to_wn(const LemmaParams& p, double eps) {
  const double norm = std::sqrt(dot(p.w, p.w) + eps);
  if (norm == 0.0) throw NumericError("lemma_to_wn: zero weight vector");
  return {p.w, -p.alpha / norm, norm * p.gamma, p.beta + p.alpha * p.gamma};
}

LemmaParams lemma_to_vanilla(const LemmaParams& p, double eps) {
  const double norm = std::sqrt(dot(p.w, p.w) + eps);
  if (norm == 0.0) throw NumericError("lemma_to_vanilla: zero weight vector");
  return {p.w, -norm * p.alpha, p.gamma / norm, p.beta + p.alpha * p.gamma};
}

VanillaStack random_vanilla_stack(std::size_t hidden, std::size_t in_dim, std::size_t max_width, CounterRng& rng,
                                  bool prelu) {
  if (in_dim == 0 || max_width == 0) throw ConfigError("random stack needs positive widths");
  VanillaStack s;
  std::size_t in = in_dim;
  for (std::size_t k = 0; k <= hidden; ++k) {
    const std::size_t out = 1 + rng.below(max_width);
    s.weights.push_back(random_normal(rng, {out, in}, 1.0 / std::sqrt(static_cast<double>(in))));
    s.biases.push_back(random_normal(rng, {out}, 1.0));
    if (k < hidden) s.slopes.push_back(prelu ? rng.uniform_tensor({out}, 0.0, 1.0) : Tensor({out}));
    in = out;
  }
  return s;
}

double max_param_diff(const VanillaStack& a, const VanillaStack& b) {
  return std::max({max_diff_lists(a.weights, b.weights), max_diff_lists(a.biases, b.biases),
                   max_diff_lists(a.slopes, b.slopes)});
}

double max_param_diff(const WNStack& a, const WNStack& b) {
  if (a.weights.empty() || a.weights.size() != b.weights.size()) return std::numeric_limits<double>::infinity();
  const std::vector<Tensor> strict_a(a.weights.begin(), a.weights.end() - 1);
  const std::vector<Tensor> strict_b(b.weights.begin(), b.weights.end() - 1);
  auto effective = [](const WNStack& s) {
    const Tensor norm = row_norms(s.weights.back(), s.eps, "max_param_diff");
    return scale_rows(s.weights.back(), elementwise(s.gamma, norm, [](double g, double n) { return g / n; }));
  };
  if (a.weights.back().shape() != b.weights.back().shape() || a.beta.shape() != b.beta.shape()) {
    return std::numeric_limits<double>::infinity();
  }
  return std::max({max_diff_lists(strict_a, strict_b), max_diff_lists(a.alphas, b.alphas),
                   max_diff_lists(a.slopes, b.slopes), max_abs_diff(effective(a), effective(b)),
                   max_abs_diff(a.beta, b.beta)});
}

nlohmann::ordered_json EquivalenceReport::to_json() const {
  nlohmann::ordered_json j;
  j["depth"] = depth;
  j["layers"] = 2 * depth + 1;
  j["max_width"] = width;
  j["trials"] = trials;
  j["stacks"] = stacks;
  j["max_output_discrepancy"] = max_output_discrepancy;
  j["max_inverse_discrepancy"] = max_inverse_discrepancy;
  j["max_roundtrip_error"] = max_roundtrip_error;
  j["max_wn_roundtrip_error"] = max_wn_roundtrip_error;
  j["output_tolerance"] = output_tolerance;
  j["roundtrip_tolerance"] = roundtrip_tolerance;
  j["passed"] = passed;
  return j;
}

EquivalenceReport run_equivalence_check(std::size_t depth, std::size_t width, std::size_t trials, std::uint64_t seed,
                                        std::size_t stacks) {
  if (width == 0 || trials == 0 || stacks == 0) throw ConfigError("equivalence check needs positive width, trials and stacks");
  EquivalenceReport r;
  r.depth = depth;
  r.width = width;
  r.trials = trials;
  r.stacks = stacks;
  CounterRng rng(seed, 0xE0);
  for (std::size_t s = 0; s < stacks; ++s) {
    const std::size_t in_dim = 1 + rng.below(width);
    const VanillaStack v = random_vanilla_stack(depth, in_dim, width, rng, s % 2 == 1);
    const Tensor x = rng.normal_tensor({trials, in_dim});

    const WNStack w = vanilla_to_wn(v);
    r.max_output_discrepancy = std::max(r.max_output_discrepancy, max_abs_diff(forward(v, x), forward(w, x)));
    r.max_roundtrip_error = std::max(r.max_roundtrip_error, max_param_diff(wn_to_vanilla(w), v));

    // Independent WN stack for the inverse direction.
    WNStack w2;
    std::size_t in = in_dim;
    for (std::size_t k = 0; k <= depth; ++k) {
      const std::size_t out = 1 + rng.below(width);
      w2.weights.push_back(rng.normal_tensor({out, in}));
      if (k < depth) {
        w2.alphas.push_back(rng.normal_tensor({out}));
        w2.slopes.push_back(s % 2 == 1 ? rng.uniform_tensor({out}, 0.0, 1.0) : Tensor({out}));
      } else {
        w2.gamma = rng.normal_tensor({out});
        w2.beta = rng.normal_tensor({out});
      }
      in = out;
    }
    const VanillaStack v2 = wn_to_vanilla(w2);
    r.max_inverse_discrepancy = std::max(r.max_inverse_discrepancy, max_abs_diff(forward(w2, x), forward(v2, x)));
    r.max_wn_roundtrip_error = std::max(r.max_wn_roundtrip_error, max_param_diff(vanilla_to_wn(v2), w2));
  }
  r.passed = r.max_output_discrepancy < r.output_tolerance && r.max_inverse_discrepancy < r.output_tolerance &&
             r.max_roundtrip_error < r.roundtrip_tolerance && r.max_wn_roundtrip_error < r.roundtrip_tolerance;
  return r;
}

}  // namespace wngan
