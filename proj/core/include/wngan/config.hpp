#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace wngan {

/// Training run configuration. Loaded from JSON; keys not listed here are
/// rejected.
struct TrainConfig {
  double lr = 1e-4;
  double rmsprop_alpha = 0.9;
  double rmsprop_eps = 1e-6;
  std::size_t batch_size = 64;
  std::size_t latent_dim = 16;
  std::size_t total_iters = 2000;
  std::size_t eval_every = 500;
  std::size_t checkpoint_every = 500;
  std::uint64_t seed = 1;

  std::string architecture = "mlp";  // mlp | dcgan | resnet
  std::size_t hidden = 128;          // mlp width
  std::size_t base_features = 16;    // dcgan first conv width
  std::size_t min_spatial = 2;       // dcgan stopping size
  std::vector<std::size_t> feature_plan{16, 32};  // resnet levels

  std::size_t dataset_size = 2048;  // builtin generators only
  std::size_t image_size = 0;       // image-dir resize target; 0 keeps the crop size
  std::size_t test_size = 200;
  std::size_t eval_samples = 64;  // fixed running-eval subset
  std::size_t eval_steps = 50;
  double eval_lr = 0.01;
  std::size_t sample_count = 16;  // fixed-code sample grid
  std::size_t stability_window = 5;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

}  // namespace wngan
