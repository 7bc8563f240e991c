#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wngan/gradcheck.hpp"

namespace wngan {

/// One element outside tolerance. `numeric_wide` repeats the central
/// difference with a 100x larger step; agreement there separates roundoff
/// in the oracle from a wrong analytic gradient.
struct GradMismatch {
  std::size_t trial = 0;
  std::string leaf;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double numeric_wide = 0.0;
};

/// Result for one layer or op over all its random points.
struct GradCaseReport {
  std::string name;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  /// Leaf holding the worst relative error, e.g. "x" or "kernel".
  std::string worst_leaf;
  /// Every leaf whose gradient was checked: the inputs and each trainable
  /// parameter.
  std::vector<std::string> leaves;
  std::vector<GradMismatch> mismatches;  // at most a few per case
  bool passed = true;

  nlohmann::ordered_json to_json() const;
};

struct GradSuiteReport {
  std::vector<GradCaseReport> cases;
  double h = 1e-6;
  GradTolerance tolerance;
  double wall_ms = 0.0;
  bool passed = true;

  nlohmann::ordered_json to_json() const;
};

/// Names accepted by run_gradient_suite: every layer kind plus the
/// differentiable tensor ops ("op_*").
std::vector<std::string> gradient_case_names();

/// Checks the autodiff gradient of a random linear read-out of each case's
/// output against central differences, for the input and every trainable
/// parameter, at `trials` random points. Throws ConfigError on an unknown name.
GradSuiteReport run_gradient_suite(std::size_t trials, std::uint64_t seed,
                                   const std::optional<std::string>& only = std::nullopt, double h = 1e-6,
                                   GradTolerance tol = {});

}  // namespace wngan
