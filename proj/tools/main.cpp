// wngan: train, evaluate and check weight-normalized GANs.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wngan/checkpoint.hpp"
#include "wngan/config.hpp"
#include "wngan/dataset.hpp"
#include "wngan/equivalence.hpp"
#include "wngan/errors.hpp"
#include "wngan/evaluation.hpp"
#include "wngan/gradient_suite.hpp"
#include "wngan/image_io.hpp"
#include "wngan/lipschitz.hpp"
#include "wngan/network.hpp"
#include "wngan/training.hpp"

namespace {

using namespace wngan;
using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

constexpr std::uint64_t kSampleStream = 0x5A3D;

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

DatasetOptions dataset_options(const TrainConfig& cfg) {
  DatasetOptions o;
  o.size = cfg.dataset_size;
  o.seed = cfg.seed;
  o.image_size = cfg.image_size;
  return o;
}

TrainConfig config_of(const Checkpoint& c) {
  if (!c.meta.contains("config")) throw IoError("checkpoint metadata lacks 'config'");
  return train_config_from_json(c.meta.at("config"));
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string dataset;
  std::string variant;
  std::string out;
  std::string resume;
};

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  cfg.validate();
  const Dataset data = load_dataset(a.dataset, dataset_options(cfg));
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.resume_from = a.resume;
  opts.on_record = [](const MetricRow& r) {
    std::cerr << "iter " << r.iter << "  loss_d " << r.loss_d << "  loss_g " << r.loss_g << "  running_rec_loss "
              << r.running_rec_loss << "\n";
  };
  const TrainResult res = train_loop(cfg, data, parse_variant(a.variant), opts);
  json j;
  j["out"] = a.out;
  j["initial_running_loss"] = res.initial_running_loss;
  j["best_running_loss"] = res.best_running_loss;
  j["best_iteration"] = res.best_iteration;
  j["best_checkpoint"] = res.best_checkpoint;
  j["last_checkpoint"] = res.last_checkpoint;
  j["wall_ms"] = res.wall_ms;
  print_json(j);
  for (const auto& r : res.records) {
    if (!std::isfinite(r.loss_d) || !std::isfinite(r.loss_g)) return kExitFailed;
  }
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::size_t steps = 2000;
  double lr = 0.01;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = config_of(ckpt);
  Network gen = generator_from_checkpoint(ckpt);
  const Dataset data = load_dataset(a.dataset, dataset_options(cfg));
  if (data.sample_shape != gen.spec().data_shape) {
    throw ConfigError("dataset sample shape " + shape_to_string(data.sample_shape) +
                      " does not match the generator output " + shape_to_string(gen.spec().data_shape));
  }
  const DatasetSplit split = split_dataset(data.size(), cfg.test_size, cfg.seed);
  EvalConfig ec;
  ec.steps = a.steps;
  ec.lr = a.lr;
  ec.rmsprop_alpha = cfg.rmsprop_alpha;
  ec.rmsprop_eps = cfg.rmsprop_eps;
  EvalReport rep = final_eval(gen, data.batch(split.test), split.test, ec);
  rep.checkpoint_id = std::filesystem::path(a.checkpoint).filename().string();
  rep.write_json(a.out);
  json j;
  j["mean_loss"] = rep.mean_loss;
  j["samples"] = rep.per_sample_loss.size();
  j["skipped"] = rep.skipped.size();
  j["report"] = a.out;
  print_json(j);
  return rep.per_sample_loss.empty() ? kExitFailed : kExitOk;
}

int cmd_gradcheck(const std::string& layer, std::size_t trials, std::uint64_t seed) {
  const std::optional<std::string> only = layer.empty() ? std::nullopt : std::optional<std::string>(layer);
  const GradSuiteReport rep = run_gradient_suite(trials, seed, only);
  print_json(rep.to_json());
  return rep.passed ? kExitOk : kExitFailed;
}

int cmd_equiv(std::size_t depth, std::size_t width, std::size_t trials, std::uint64_t seed) {
  const EquivalenceReport rep = run_equivalence_check(depth, width, trials, seed);
  print_json(rep.to_json());
  return rep.passed ? kExitOk : kExitFailed;
}

int cmd_lipschitz(const std::string& spec_path, std::size_t trials, std::size_t pairs, std::uint64_t seed) {
  std::ifstream in(spec_path);
  if (!in) throw IoError("cannot open spec '" + spec_path + "'");
  nlohmann::json raw;
  try {
    in >> raw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("spec '" + spec_path + "' is not valid JSON: " + e.what());
  }
  // Accept either a bare network spec or {"discriminator": ..., "generator": ...}.
  const nlohmann::json& disc_json = raw.contains("discriminator") ? raw.at("discriminator") : raw;
  const NetworkSpec critic = make_critic(network_spec_from_json(disc_json));
  Network net(critic, seed);
  const std::vector<Shape> shapes = layer_input_shapes(net);

  json j;
  j["budget"] = lipschitz_budget(critic).to_json();
  json layers = json::array();
  bool passed = true;
  for (std::size_t i = 0; i < critic.layers.size(); ++i) {
    const LayerDesc& d = critic.layers[i];
    if (!is_weight_layer(d.kind) && d.kind != LayerKind::ResBlock && !is_activation(d.kind)) continue;
    GradientBoundReport r = check_gradient_bound(d, shapes[i], trials, seed + i);
    r.layer = std::to_string(i) + ":" + r.layer;
    passed = passed && r.passed;
    layers.push_back(r.to_json());
  }
  j["layer_bounds"] = layers;
  const ProbeReport probe = empirical_lipschitz(net, pairs, seed);
  passed = passed && probe.passed;
  j["probe"] = probe.to_json();
  j["passed"] = passed;
  print_json(j);
  return passed ? kExitOk : kExitFailed;
}

struct SampleArgs {
  std::string checkpoint;
  std::size_t count = 16;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_sample(const SampleArgs& a) {
  if (a.count == 0) throw ConfigError("--count must be positive");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Network gen = generator_from_checkpoint(ckpt);
  CounterRng rng(a.seed, kSampleStream);
  const Tensor z = rng.normal_tensor({a.count, gen.spec().latent_dim});
  const Tensor x = gen.forward(Var::constant(z), Mode::Inference).value();
  Tensor image;
  if (gen.spec().data_shape.size() == 1) {
    image = render_scatter(x);
  } else {
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(a.count))));
    image = make_grid(x, cols);
  }
  write_pnm(a.out, image);
  json j;
  j["out"] = a.out;
  j["count"] = a.count;
  j["shape"] = shape_to_string(image.shape());
  print_json(j);
  return kExitOk;
}

std::string svg_polyline(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& label) {
  constexpr double kW = 640, kH = 400, kM = 40;
  double x0 = xs.front(), x1 = xs.back(), y0 = ys.front(), y1 = ys.front();
  for (double y : ys) {
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px = kM + (xs[i] - x0) / (x1 - x0) * (kW - 2 * kM);
    const double py = kH - kM - (ys[i] - y0) / (y1 - y0) * (kH - 2 * kM);
    s << px << "," << py << " ";
  }
  s << "\"/>\n";
  s << "<text x=\"" << kM << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << label << " (min " << y0
    << ", max " << y1 << ")</text>\n";
  s << "</svg>\n";
  return s.str();
}

int cmd_curve(const std::string& metrics, const std::string& column, const std::string& out) {
  const std::vector<MetricRow> rows = read_metrics_csv(metrics);
  if (rows.empty()) throw ConfigError("metrics file '" + metrics + "' has no rows");
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(static_cast<double>(r.iter));
    if (column == "loss_d") {
      ys.push_back(r.loss_d);
    } else if (column == "loss_g") {
      ys.push_back(r.loss_g);
    } else if (column == "running_rec_loss") {
      ys.push_back(r.running_rec_loss);
    } else if (column == "wall_ms") {
      ys.push_back(r.wall_ms);
    } else {
      throw ConfigError("unknown column '" + column + "'; expected loss_d, loss_g, running_rec_loss or wall_ms");
    }
  }
  const std::string ext = std::filesystem::path(out).extension().string();
  if (ext == ".svg") {
    write_text(out, svg_polyline(xs, ys, column));
  } else if (ext == ".csv") {
    std::ostringstream s;
    s.precision(17);
    s << "iter," << column << "\n";
    for (std::size_t i = 0; i < xs.size(); ++i) s << rows[i].iter << "," << ys[i] << "\n";
    write_text(out, s.str());
  } else {
    throw ConfigError("--out must end in .csv or .svg");
  }
  json j;
  j["out"] = out;
  j["points"] = xs.size();
  print_json(j);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-normalized GAN toolkit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a GAN and write checkpoints, metrics.csv and sample grids");
  c_train->add_option("--config", train.config, "Training config JSON (defaults when omitted)");
  c_train->add_option("--dataset", train.dataset, "gauss2d-mixture | rings | synthetic-shapes-8x8 | image directory")
      ->required();
  c_train->add_option("--variant", train.variant, "vanilla | bn | wn")
      ->required()
      ->check(CLI::IsMember({"vanilla", "bn", "wn"}));
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_option("--resume", train.resume, "Checkpoint to resume from");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Reconstruction-loss evaluation of a checkpoint on its test split");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--dataset", ev.dataset)->required();
  c_eval->add_option("--steps", ev.steps)->check(CLI::PositiveNumber);
  c_eval->add_option("--lr", ev.lr)->check(CLI::PositiveNumber);
  c_eval->add_option("--out", ev.out, "Report JSON path")->required();

  std::string layer;
  std::size_t grad_trials = 100;
  std::uint64_t grad_seed = 1;
  auto* c_grad = app.add_subcommand("gradcheck", "Autodiff versus central finite differences");
  c_grad->add_option("--layer", layer, "Single case to check");
  c_grad->add_option("--trials", grad_trials)->check(CLI::PositiveNumber);
  c_grad->add_option("--seed", grad_seed);
  c_grad->add_flag_callback(
      "--list",
      [] {
        for (const auto& n : gradient_case_names()) std::cout << n << "\n";
        throw CLI::Success();
      },
      "List case names");

  std::size_t depth = 2, width = 8, eq_trials = 1000;
  std::uint64_t eq_seed = 1;
  auto* c_equiv = app.add_subcommand("equiv-check", "Vanilla <-> weight-normalized stack equivalence");
  c_equiv->add_option("--depth", depth, "Hidden layers n (the stack has 2n+1 layers)")->check(CLI::PositiveNumber);
  c_equiv->add_option("--width", width)->check(CLI::PositiveNumber);
  c_equiv->add_option("--trials", eq_trials)->check(CLI::PositiveNumber);
  c_equiv->add_option("--seed", eq_seed);

  std::string spec_path;
  std::size_t lip_trials = 1000, pairs = 10000;
  std::uint64_t lip_seed = 1;
  auto* c_lip = app.add_subcommand("lipschitz-check", "Gradient bounds and Lipschitz probe of a WN critic");
  c_lip->add_option("--spec", spec_path, "Discriminator spec JSON")->required();
  c_lip->add_option("--trials", lip_trials, "Random trials per layer")->check(CLI::PositiveNumber);
  c_lip->add_option("--pairs", pairs, "Input pairs for the Lipschitz probe")->check(CLI::PositiveNumber);
  c_lip->add_option("--seed", lip_seed);

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "Write a grid of generator samples");
  c_sample->add_option("--checkpoint", sample.checkpoint)->required();
  c_sample->add_option("--count", sample.count);
  c_sample->add_option("--seed", sample.seed);
  c_sample->add_option("--out", sample.out)->required();

  std::string metrics, column = "running_rec_loss", curve_out;
  auto* c_curve = app.add_subcommand("curve", "Extract a metrics column as CSV or SVG");
  c_curve->add_option("--metrics", metrics)->required();
  c_curve->add_option("--column", column);
  c_curve->add_option("--out", curve_out, "Output path ending in .csv or .svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_eval(ev);
    if (*c_grad) return cmd_gradcheck(layer, grad_trials, grad_seed);
    if (*c_equiv) return cmd_equiv(depth, width, eq_trials, eq_seed);
    if (*c_lip) return cmd_lipschitz(spec_path, lip_trials, pairs, lip_seed);
    if (*c_sample) return cmd_sample(sample);
    if (*c_curve) return cmd_curve(metrics, column, curve_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitUsage;
}
