#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wngan/autodiff.hpp"
#include "wngan/network.hpp"

namespace wngan {

struct EvalConfig {
  std::size_t steps = 50;
  double lr = 0.01;
  double rmsprop_alpha = 0.9;
  double rmsprop_eps = 1e-6;
  /// Codes optimized together per chunk; 0 puts every sample in one chunk.
  /// Samples never interact, so chunking does not change the result.
  std::size_t chunk_size = 0;
  /// Record the mean loss at every step (steps + 1 points).
  bool record_curve = false;
};

/// Maps a batch of codes [n, latent] to a batch of samples.
using GeneratorFn = std::function<Var(const Var& z)>;

struct ReconstructResult {
  Tensor z;                          // [n, latent]
  std::vector<double> per_sample;    // |G(z) - x|^2 / numel(x), at the final z
  std::vector<double> curve;         // mean loss at z_0 .. z_steps, if recorded
};

/// Starts every code at zero and takes `steps` RMSProp steps on
/// |G(z) - x|^2. Generator parameters are not touched. Throws NumericError
/// naming the step if a non-finite value appears.
ReconstructResult reconstruct(const GeneratorFn& gen, std::size_t latent_dim, const Tensor& targets,
                              const EvalConfig& cfg);

struct EvalReport {
  std::string mode;  // "running" or "final"
  std::string checkpoint_id;
  std::size_t steps = 0;
  double lr = 0.0;
  std::size_t requested = 0;
  std::vector<std::size_t> sample_indices;  // dataset indices of reported losses
  std::vector<double> per_sample_loss;
  std::vector<std::size_t> skipped;  // dataset indices whose inversion failed
  double mean_loss = 0.0;
  double wall_ms = 0.0;
  std::vector<double> curve;

  nlohmann::ordered_json to_json() const;
  /// index,loss rows; one per reported sample.
  void write_csv(const std::string& path) const;
  void write_json(const std::string& path) const;
};

/// Generator in inference mode with frozen parameters.
GeneratorFn generator_fn(Network& gen);

/// Reconstruction loss over `targets` [n, ...]; `indices` labels the rows.
/// Samples whose inversion fails are skipped and listed in the report.
EvalReport evaluate(Network& gen, const Tensor& targets, const std::vector<std::size_t>& indices,
                    const EvalConfig& cfg, const std::string& mode, const std::string& checkpoint_id = "");

/// Low-budget evaluation on a fixed subset (default 50 steps).
EvalReport running_eval(Network& gen, const Tensor& subset, const std::vector<std::size_t>& indices,
                        EvalConfig cfg = {});
/// Full-budget evaluation; throws ConfigError on an empty test set.
EvalReport final_eval(Network& gen, const Tensor& test_set, const std::vector<std::size_t>& indices,
                      EvalConfig cfg = {.steps = 2000});

}  // namespace wngan
