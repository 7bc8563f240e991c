#include "wngan/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "wngan/errors.hpp"
#include "wngan/evaluation.hpp"
#include "wngan/image_io.hpp"

namespace wngan {

namespace {

constexpr std::uint64_t kTrainStream = 0x7A1;
constexpr std::uint64_t kGridStream = 0x6A1D;
constexpr const char* kMetricsHeader = "iter,loss_d,loss_g,running_rec_loss,wall_ms";

const char* kDiscPrefix = "discriminator.";
const char* kGenPrefix = "generator.";

void collect(Network& net, const std::string& prefix, NamedTensors& out) {
  for (const auto& p : net.parameters()) out.emplace_back(prefix + p.name, p.var.value());
  for (const auto& b : net.buffers()) out.emplace_back(prefix + b.name, *b.tensor);
}

void collect_state(const RMSProp& opt, const std::string& prefix, NamedTensors& out) {
  for (std::size_t i = 0; i < opt.params().size(); ++i) out.emplace_back(prefix + opt.params()[i].name, opt.state()[i]);
}

const Tensor& lookup(const NamedTensors& list, const std::string& name, const Shape& shape) {
  for (const auto& [n, t] : list) {
    if (n != name) continue;
    if (t.shape() != shape) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_to_string(t.shape()) + ", expected " +
                    shape_to_string(shape));
    }
    return t;
  }
  throw IoError("checkpoint is missing tensor '" + name + "'");
}

void load_network(Network& net, const std::string& prefix, const NamedTensors& list) {
  for (auto& p : net.parameters()) {
    Var v = p.var;
    v.mutable_value() = lookup(list, prefix + p.name, v.shape());
  }
  for (auto& b : net.buffers()) *b.tensor = lookup(list, prefix + b.name, b.tensor->shape());
}

void load_state(RMSProp& opt, const std::string& prefix, const NamedTensors& list) {
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    opt.state()[i] = lookup(list, prefix + opt.params()[i].name, opt.state()[i].shape());
  }
}

std::string format_row(const MetricRow& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.iter << ',' << r.loss_d << ',' << r.loss_g << ',' << r.running_rec_loss << ','
     << std::setprecision(6) << r.wall_ms;
  return os.str();
}

double window_std(const std::vector<MetricRow>& rows, std::size_t window) {
  if (rows.empty()) return 0.0;
  const std::size_t n = std::min(window, rows.size());
  double mean = 0.0;
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) mean += rows[i].running_rec_loss;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) {
    var += (rows[i].running_rec_loss - mean) * (rows[i].running_rec_loss - mean);
  }
  return std::sqrt(var / static_cast<double>(n));
}

Tensor sample_image(Network& gen, const Tensor& codes) {
  const Tensor out = gen.forward(Var::constant(codes), Mode::Inference).value();
  if (out.rank() == 4) {
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(out.dim(0)))));
    return make_grid(out, cols);
  }
  if (out.rank() == 2 && out.dim(1) == 2) return render_scatter(out);
  throw ShapeError("sample grid: cannot render generator output " + shape_to_string(out.shape()));
}

}  // namespace

GanSpecs specs_for(const TrainConfig& cfg, Variant variant, const Shape& data_shape) {
  if (cfg.architecture == "mlp") {
    if (data_shape.size() != 1) throw ConfigError("mlp architecture needs flat samples, got " + shape_to_string(data_shape));
    return build_mlp_gan(variant, data_shape[0], cfg.hidden, cfg.latent_dim);
  }
  if (data_shape.size() != 3 || data_shape[1] != data_shape[2]) {
    throw ConfigError(cfg.architecture + " architecture needs square [c, s, s] images, got " +
                      shape_to_string(data_shape));
  }
  if (cfg.architecture == "dcgan") {
    return build_dcgan(variant, data_shape[1], cfg.base_features, cfg.latent_dim, cfg.min_spatial, data_shape[0]);
  }
  return build_resnet_gan(variant, cfg.feature_plan, cfg.latent_dim, data_shape[1], data_shape[0]);
}

GanState::GanState(const TrainConfig& cfg, Variant v, const Shape& data_shape)
    : GanState(cfg, v, specs_for(cfg, v, data_shape)) {}

GanState::GanState(const TrainConfig& cfg, Variant v, const GanSpecs& specs)
    : config(cfg),
      variant(v),
      disc(specs.discriminator, cfg.seed),
      gen(specs.generator, cfg.seed),
      opt_d(disc.parameters(), {cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps}),
      opt_g(gen.parameters(), {cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps}),
      rng(cfg.seed, kTrainStream) {}

Var bce_with_logits(const Var& logits, bool real) {
  return mean(softplus(real ? neg(logits) : logits));
}

StepMetrics train_step(GanState& s, const Tensor& real_batch, std::size_t iteration) {
  const std::size_t n = s.config.batch_size;
  if (real_batch.rank() < 2 || real_batch.dim(0) != n) {
    throw ShapeError("train_step: real batch " + shape_to_string(real_batch.shape()) + " does not have batch size " +
                     std::to_string(n));
  }
  StepMetrics m;
  try {
    // Discriminator: real and generated samples go through separate passes.
    s.opt_d.zero_grad();
    const Tensor z = s.rng.normal_tensor({n, s.config.latent_dim});
    const Var fake = Var::constant(s.gen.forward(Var::constant(z), Mode::Train).value());
    Var loss_real = bce_with_logits(s.disc.forward_logits(Var::constant(real_batch), Mode::Train), true);
    Var loss_fake = bce_with_logits(s.disc.forward_logits(fake, Mode::Train), false);
    Var loss_d = add(loss_real, loss_fake);
    backward(loss_d);
    s.opt_d.step();
    clip_slopes(s.opt_d.params());
    m.loss_d = loss_d.value().item();

    // Generator: non-saturating loss on a fresh batch; the discriminator is
    // frozen so no gradient is accumulated into it.
    s.opt_g.zero_grad();
    s.disc.set_trainable(false);
    const Tensor z2 = s.rng.normal_tensor({n, s.config.latent_dim});
    Var loss_g;
    try {
      loss_g = bce_with_logits(s.disc.forward_logits(s.gen.forward(Var::constant(z2), Mode::Train), Mode::Train), true);
    } catch (...) {
      s.disc.set_trainable(true);
      throw;
    }
    s.disc.set_trainable(true);
    backward(loss_g);
    s.opt_g.step();
    clip_slopes(s.opt_g.params());
    m.loss_g = loss_g.value().item();
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(iteration) + ": " + e.what());
  }
  return m;
}

Checkpoint capture(GanState& s, const nlohmann::json& extra_meta) {
  Checkpoint c;
  c.meta = nlohmann::json::object();
  c.meta["generator"] = to_json(s.gen.spec());
  c.meta["discriminator"] = to_json(s.disc.spec());
  c.meta["config"] = to_json(s.config);
  c.meta["variant"] = to_string(s.variant);
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) c.meta[it.key()] = it.value();
  collect(s.disc, kDiscPrefix, c.tensors);
  collect(s.gen, kGenPrefix, c.tensors);
  collect_state(s.opt_d, kDiscPrefix, c.optimizer);
  collect_state(s.opt_g, kGenPrefix, c.optimizer);
  c.rng_seed = s.rng.seed();
  c.rng_counter = s.rng.counter();
  c.iteration = s.iteration;
  c.best_running_loss = s.best_running_loss;
  return c;
}

void restore(GanState& s, const Checkpoint& c) {
  if (c.rng_seed != s.rng.seed()) throw IoError("checkpoint rng seed does not match the run's seed");
  load_network(s.disc, kDiscPrefix, c.tensors);
  load_network(s.gen, kGenPrefix, c.tensors);
  load_state(s.opt_d, kDiscPrefix, c.optimizer);
  load_state(s.opt_g, kGenPrefix, c.optimizer);
  s.rng.set_counter(c.rng_counter);
  s.iteration = static_cast<std::size_t>(c.iteration);
  s.best_running_loss = c.best_running_loss;
}

GanState state_from_checkpoint(const Checkpoint& c) {
  for (const char* key : {"generator", "discriminator", "config", "variant"}) {
    if (!c.meta.contains(key)) throw IoError(std::string("checkpoint metadata lacks '") + key + "'");
  }
  const TrainConfig cfg = train_config_from_json(c.meta.at("config"));
  GanSpecs specs{network_spec_from_json(c.meta.at("discriminator")), network_spec_from_json(c.meta.at("generator"))};
  GanState s(cfg, parse_variant(c.meta.at("variant").get<std::string>()), specs);
  restore(s, c);
  return s;
}

Network generator_from_checkpoint(const Checkpoint& c) {
  if (!c.meta.contains("generator")) throw IoError("checkpoint metadata lacks 'generator'");
  Network gen(network_spec_from_json(c.meta.at("generator")), 0);
  load_network(gen, kGenPrefix, c.tensors);
  return gen;
}

TrainResult train_loop(const TrainConfig& cfg, const Dataset& data, Variant variant, const TrainOptions& options) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (options.out_dir.empty()) throw ConfigError("train_loop: output directory required");
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + options.out_dir + "': " + ec.message());
  const fs::path out(options.out_dir);

  const DatasetSplit split = split_dataset(data.size(), cfg.test_size, cfg.seed);
  const std::vector<std::size_t> eval_idx(split.test.begin(),
                                          split.test.begin() + static_cast<std::ptrdiff_t>(cfg.eval_samples));
  const Tensor eval_targets = data.batch(eval_idx);
  const EvalConfig ecfg{.steps = cfg.eval_steps, .lr = cfg.eval_lr, .rmsprop_alpha = cfg.rmsprop_alpha,
                        .rmsprop_eps = cfg.rmsprop_eps};

  TrainResult result;
  GanState state(cfg, variant, data.sample_shape);
  if (!options.resume_from.empty()) {
    const Checkpoint c = load_checkpoint(options.resume_from);
    if (c.meta.value("variant", "") != to_string(variant) ||
        c.meta.value("generator", nlohmann::json()) != nlohmann::json(to_json(state.gen.spec()))) {
      throw ConfigError("checkpoint '" + options.resume_from + "' was written by a different variant or architecture");
    }
    restore(state, c);
    result.initial_running_loss = c.meta.value("initial_running_loss", 0.0);
    result.best_iteration = c.meta.value("best_iteration", std::size_t{0});
    result.last_checkpoint = options.resume_from;
  } else {
    result.initial_running_loss = running_eval(state.gen, eval_targets, eval_idx, ecfg).mean_loss;
  }

  const fs::path metrics_path = out / "metrics.csv";
  const bool fresh_log = !fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw IoError("cannot open '" + metrics_path.string() + "'");
  if (fresh_log) metrics << kMetricsHeader << '\n' << std::flush;

  const Tensor grid_codes = CounterRng(cfg.seed, kGridStream).normal_tensor({cfg.sample_count, cfg.latent_dim});

  auto meta = [&]() {
    nlohmann::json m;
    m["dataset"] = data.name;
    m["initial_running_loss"] = result.initial_running_loss;
    m["best_iteration"] = result.best_iteration;
    return m;
  };
  auto guarded = [&](const std::function<void()>& io) {
    try {
      io();
    } catch (const IoError& e) {
      throw IoError(std::string(e.what()) + "; last good checkpoint: " +
                    (result.last_checkpoint.empty() ? "(none)" : result.last_checkpoint));
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t it = state.iteration + 1; it <= cfg.total_iters; ++it) {
    std::vector<std::size_t> idx(cfg.batch_size);
    for (auto& i : idx) i = split.train[state.rng.below(split.train.size())];
    const StepMetrics m = train_step(state, data.batch(idx), it);
    state.iteration = it;

    if (it % cfg.eval_every == 0) {
      const EvalReport rep = running_eval(state.gen, eval_targets, eval_idx, ecfg);
      MetricRow row{it, m.loss_d, m.loss_g, rep.mean_loss,
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()};
      result.records.push_back(row);
      guarded([&] {
        metrics << format_row(row) << '\n' << std::flush;
        if (!metrics) throw IoError("write failed for '" + metrics_path.string() + "'");
      });
      if (rep.mean_loss < state.best_running_loss) {
        state.best_running_loss = rep.mean_loss;
        result.best_iteration = it;
        const std::string best = (out / "best.bin").string();
        guarded([&] { save_checkpoint(best, capture(state, meta())); });
        result.best_checkpoint = best;
      }
      if (options.write_samples) {
        guarded([&] { write_pnm((out / ("samples_" + std::to_string(it) + ".ppm")).string(), sample_image(state.gen, grid_codes)); });
      }
      if (options.on_record) options.on_record(row);
    }
    if (it % cfg.checkpoint_every == 0 || it == cfg.total_iters) {
      const std::string path = (out / ("ckpt_" + std::to_string(it) + ".bin")).string();
      guarded([&] { save_checkpoint(path, capture(state, meta())); });
      result.last_checkpoint = path;
    }
  }

  result.best_running_loss = state.best_running_loss;
  if (result.best_checkpoint.empty() && fs::exists(out / "best.bin")) result.best_checkpoint = (out / "best.bin").string();
  result.running_loss_window_std = window_std(result.records, cfg.stability_window);
  result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::ordered_json summary;
  summary["variant"] = to_string(variant);
  summary["dataset"] = data.name;
  summary["iterations"] = state.iteration;
  summary["initial_running_loss"] = result.initial_running_loss;
  summary["final_running_loss"] = result.records.empty() ? result.initial_running_loss : result.records.back().running_rec_loss;
  summary["best_running_loss"] = result.best_running_loss;
  summary["best_iteration"] = result.best_iteration;
  summary["best_checkpoint"] = result.best_checkpoint;
  summary["last_checkpoint"] = result.last_checkpoint;
  summary["stability_window"] = cfg.stability_window;
  summary["running_loss_window_std"] = result.running_loss_window_std;
  summary["wall_ms"] = result.wall_ms;
  guarded([&] {
    std::ofstream s(out / "run_summary.json");
    s << summary.dump(2) << '\n';
    if (!s) throw IoError("cannot write run_summary.json in '" + options.out_dir + "'");
  });
  return result;
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw IoError("'" + path + "' lacks the metrics header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricRow r;
    char c1, c2, c3, c4;
    if (!(ls >> r.iter >> c1 >> r.loss_d >> c2 >> r.loss_g >> c3 >> r.running_rec_loss >> c4 >> r.wall_ms) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
      throw IoError("'" + path + "': malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace wngan
