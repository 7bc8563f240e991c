#include "wngan/config.hpp"

#include <fstream>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void positive(std::size_t v, const char* name) {
  if (v == 0) throw ConfigError(std::string("config field '") + name + "' must be positive");
}

void positive(double v, const char* name) {
  if (!(v > 0.0)) throw ConfigError(std::string("config field '") + name + "' must be positive");
}

}  // namespace

void TrainConfig::validate() const {
  positive(lr, "lr");
  positive(rmsprop_alpha, "rmsprop_alpha");
  if (rmsprop_alpha >= 1.0) throw ConfigError("config field 'rmsprop_alpha' must be below 1");
  positive(rmsprop_eps, "rmsprop_eps");
  positive(batch_size, "batch_size");
  positive(latent_dim, "latent_dim");
  positive(total_iters, "total_iters");
  positive(eval_every, "eval_every");
  positive(checkpoint_every, "checkpoint_every");
  if (eval_every > total_iters) throw ConfigError("config field 'eval_every' exceeds 'total_iters'");
  if (architecture != "mlp" && architecture != "dcgan" && architecture != "resnet") {
    throw ConfigError("config field 'architecture' must be mlp, dcgan or resnet");
  }
  positive(hidden, "hidden");
  positive(base_features, "base_features");
  positive(min_spatial, "min_spatial");
  if (feature_plan.empty()) throw ConfigError("config field 'feature_plan' must not be empty");
  positive(dataset_size, "dataset_size");
  positive(test_size, "test_size");
  positive(eval_samples, "eval_samples");
  if (eval_samples > test_size) throw ConfigError("config field 'eval_samples' exceeds 'test_size'");
  positive(eval_steps, "eval_steps");
  positive(eval_lr, "eval_lr");
  positive(sample_count, "sample_count");
  positive(stability_window, "stability_window");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* const kKeys[] = {
      "lr",           "rmsprop_alpha", "rmsprop_eps",  "batch_size",   "latent_dim",       "total_iters",
      "eval_every",   "checkpoint_every", "seed",      "architecture", "hidden",           "base_features",
      "min_spatial",  "feature_plan",  "dataset_size", "image_size",   "test_size",        "eval_samples",
      "eval_steps",   "eval_lr",       "sample_count", "stability_window"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  TrainConfig c;
  read(j, "lr", c.lr);
  read(j, "rmsprop_alpha", c.rmsprop_alpha);
  read(j, "rmsprop_eps", c.rmsprop_eps);
  read(j, "batch_size", c.batch_size);
  read(j, "latent_dim", c.latent_dim);
  read(j, "total_iters", c.total_iters);
  read(j, "eval_every", c.eval_every);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "seed", c.seed);
  read(j, "architecture", c.architecture);
  read(j, "hidden", c.hidden);
  read(j, "base_features", c.base_features);
  read(j, "min_spatial", c.min_spatial);
  read(j, "feature_plan", c.feature_plan);
  read(j, "dataset_size", c.dataset_size);
  read(j, "image_size", c.image_size);
  read(j, "test_size", c.test_size);
  read(j, "eval_samples", c.eval_samples);
  read(j, "eval_steps", c.eval_steps);
  read(j, "eval_lr", c.eval_lr);
  read(j, "sample_count", c.sample_count);
  read(j, "stability_window", c.stability_window);
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["rmsprop_alpha"] = c.rmsprop_alpha;
  j["rmsprop_eps"] = c.rmsprop_eps;
  j["batch_size"] = c.batch_size;
  j["latent_dim"] = c.latent_dim;
  j["total_iters"] = c.total_iters;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["seed"] = c.seed;
  j["architecture"] = c.architecture;
  j["hidden"] = c.hidden;
  j["base_features"] = c.base_features;
  j["min_spatial"] = c.min_spatial;
  j["feature_plan"] = c.feature_plan;
  j["dataset_size"] = c.dataset_size;
  j["image_size"] = c.image_size;
  j["test_size"] = c.test_size;
  j["eval_samples"] = c.eval_samples;
  j["eval_steps"] = c.eval_steps;
  j["eval_lr"] = c.eval_lr;
  j["sample_count"] = c.sample_count;
  j["stability_window"] = c.stability_window;
  return j;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return train_config_from_json(j);
}

}  // namespace wngan
