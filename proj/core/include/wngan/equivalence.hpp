#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "wngan/layers.hpp"
#include "wngan/rng.hpp"

namespace wngan {

/// Alternating linear / PReLU stack with 2n+1 layers: n hidden linear layers
/// each followed by a PReLU, then one output linear layer. A zero slope makes
/// the activation a plain ReLU.
struct VanillaStack {
  std::vector<Tensor> weights;  // n+1 matrices [out, in]
  std::vector<Tensor> biases;   // n+1 vectors [out]
  std::vector<Tensor> slopes;   // n vectors, one per hidden layer

  std::size_t hidden_layers() const { return slopes.size(); }
};

/// The weight-normalized counterpart: strict WN hidden layers each followed
/// by a TPReLU, and an affine WN output layer.
struct WNStack {
  std::vector<Tensor> weights;  // n+1 matrices [out, in]
  std::vector<Tensor> alphas;   // n vectors
  std::vector<Tensor> slopes;   // n vectors
  Tensor gamma;                 // [out of last layer]
  Tensor beta;
  double eps = kWeightNormEps;

  std::size_t hidden_layers() const { return slopes.size(); }
};

/// Rows of x [batch, in] through each stack, using the library's layers.
Tensor forward(const VanillaStack& stack, const Tensor& x);
Tensor forward(const WNStack& stack, const Tensor& x);

/// Maps a vanilla stack to a WN stack computing the same function. Row norms
/// include the stack's eps, matching what the WN layers divide by, so the
/// two stacks agree to rounding. Throws NumericError on an all-zero row.
WNStack vanilla_to_wn(const VanillaStack& stack, double eps = kWeightNormEps);
/// Inverse of vanilla_to_wn.
VanillaStack wn_to_vanilla(const WNStack& stack);

/// Single unit: y = ReLU(w.x + alpha) * gamma + beta versus
/// y = TReLU_alpha'(w'.x / |w'|) * gamma' + beta'.
struct LemmaParams {
  Tensor w;
  double alpha = 0.0;
  double gamma = 1.0;
  double beta = 0.0;
};
/// w' = w, alpha' = -alpha/|w|, beta' = beta + alpha*gamma, gamma' = |w|*gamma.
/// `eps` is added to |w|^2 (0 gives the exact Euclidean norm).
LemmaParams lemma_to_wn(const LemmaParams& p, double eps = 0.0);
/// w = w', alpha = -|w'|*alpha', beta = beta' + alpha'*gamma', gamma = gamma'/|w'|.
LemmaParams lemma_to_vanilla(const LemmaParams& p, double eps = 0.0);

/// Random stack with `hidden` hidden layers; widths are drawn from
/// [1, max_width]. With `prelu` false every slope is 0.
VanillaStack random_vanilla_stack(std::size_t hidden, std::size_t in_dim, std::size_t max_width, CounterRng& rng,
                                  bool prelu);

struct EquivalenceReport {
  std::size_t depth = 0;  // hidden layers n; the stack has 2n+1 layers
  std::size_t width = 0;
  std::size_t trials = 0;
  std::size_t stacks = 0;
  double max_output_discrepancy = 0.0;  // vanilla vs vanilla_to_wn
  double max_inverse_discrepancy = 0.0;  // wn vs wn_to_vanilla
  double max_roundtrip_error = 0.0;      // vanilla -> wn -> vanilla parameters
  double max_wn_roundtrip_error = 0.0;   // wn -> vanilla -> wn parameters
  double output_tolerance = 1e-9;
  double roundtrip_tolerance = 1e-12;
  bool passed = false;

  nlohmann::ordered_json to_json() const;
};

/// Draws `stacks` random stacks of the given depth and width bound, and
/// evaluates each on `trials` random inputs in both directions.
EquivalenceReport run_equivalence_check(std::size_t depth, std::size_t width, std::size_t trials,
                                        std::uint64_t seed, std::size_t stacks = 4);

/// Largest elementwise difference between corresponding parameters.
double max_param_diff(const VanillaStack& a, const VanillaStack& b);
/// Compares strict layers, alphas, slopes and beta directly, and the output
/// layer through its effective matrix diag(gamma / |row|) W, which is the
/// only part of an affine WN layer the function depends on.
double max_param_diff(const WNStack& a, const WNStack& b);

}  // namespace wngan
