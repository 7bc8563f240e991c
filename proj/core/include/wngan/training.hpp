#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "wngan/checkpoint.hpp"
#include "wngan/config.hpp"
#include "wngan/dataset.hpp"
#include "wngan/network.hpp"
#include "wngan/optim.hpp"

namespace wngan {

/// Builds the generator/discriminator pair a config describes for data of
/// shape `data_shape` ([d] for mlp, [c, s, s] otherwise).
GanSpecs specs_for(const TrainConfig& cfg, Variant variant, const Shape& data_shape);

/// Networks, optimizers and the sampling stream of one run.
struct GanState {
  GanState(const TrainConfig& cfg, Variant variant, const Shape& data_shape);
  GanState(const TrainConfig& cfg, Variant variant, const GanSpecs& specs);

  TrainConfig config;
  Variant variant;
  Network disc;
  Network gen;
  RMSProp opt_d;
  RMSProp opt_g;
  CounterRng rng;
  std::size_t iteration = 0;
  double best_running_loss = std::numeric_limits<double>::infinity();
};

struct StepMetrics {
  double loss_d = 0.0;
  double loss_g = 0.0;
};

/// One discriminator update (real and fake batches in separate forward
/// passes, non-saturating BCE on logits) then one generator update on a
/// fresh fake batch. Slopes of both networks are clipped to [0, 1] after
/// their update. Throws NumericError tagged with `iteration`.
StepMetrics train_step(GanState& state, const Tensor& real_batch, std::size_t iteration);

/// Binary cross-entropy of sigmoid(logits) against a constant label,
/// averaged over the batch: softplus(-l) for label 1, softplus(l) for 0.
Var bce_with_logits(const Var& logits, bool real);

Checkpoint capture(GanState& state, const nlohmann::json& extra_meta = nlohmann::json::object());
void restore(GanState& state, const Checkpoint& ckpt);
/// Rebuilds a run's state from a checkpoint alone.
GanState state_from_checkpoint(const Checkpoint& ckpt);
/// The generator of a checkpoint, ready for evaluation or sampling.
Network generator_from_checkpoint(const Checkpoint& ckpt);

struct MetricRow {
  std::size_t iter = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double running_rec_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::string out_dir;
  /// Checkpoint to continue from; empty starts fresh.
  std::string resume_from;
  bool write_samples = true;
  std::function<void(const MetricRow&)> on_record;
};

struct TrainResult {
  std::vector<MetricRow> records;
  double initial_running_loss = 0.0;
  double best_running_loss = 0.0;
  std::size_t best_iteration = 0;
  std::string best_checkpoint;
  std::string last_checkpoint;
  /// Standard deviation of the last `stability_window` running losses.
  double running_loss_window_std = 0.0;
  double wall_ms = 0.0;
};

/// Trains for config.total_iters iterations. Every eval_every iterations
/// the running reconstruction loss on a fixed test subset is logged to
/// metrics.csv, a fixed-code sample grid is written, and best.bin is
/// replaced when the loss improves. ckpt_<iter>.bin is written every
/// checkpoint_every iterations and at the end; run_summary.json at the end.
TrainResult train_loop(const TrainConfig& cfg, const Dataset& data, Variant variant, const TrainOptions& options);

/// Parses a metrics.csv written by train_loop.
std::vector<MetricRow> read_metrics_csv(const std::string& path);

}  // namespace wngan
