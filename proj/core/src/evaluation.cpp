#include "wngan/evaluation.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "wngan/errors.hpp"
#include "wngan/optim.hpp"

namespace wngan {

namespace {

/// Per-sample |G(z) - x|^2 / numel(x), plus the summed objective as a Var.
struct Objective {
  Var total;
  std::vector<double> per_sample;
};

Objective objective(const GeneratorFn& gen, const Var& z, const Var& x) {
  Var out = gen(z);
  if (out.shape() != x.shape()) {
    throw ShapeError("reconstruct: generator output " + shape_to_string(out.shape()) + " does not match targets " +
                     shape_to_string(x.shape()));
  }
  Var diff2 = square(sub(out, x));
  const std::size_t n = x.shape()[0];
  const std::size_t per = x.numel() / n;
  Objective o;
  o.per_sample.resize(n);
  const Tensor& d = diff2.value();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += d[i * per + j];
    o.per_sample[i] = s / static_cast<double>(per);
  }
  o.total = sum(diff2);
  return o;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Tensor rows(const Tensor& batch, std::size_t begin, std::size_t end) {
  Shape shape = batch.shape();
  const std::size_t per = batch.numel() / shape[0];
  shape[0] = end - begin;
  std::vector<double> data(batch.data().begin() + begin * per, batch.data().begin() + end * per);
  return Tensor(shape, std::move(data));
}

class FreezeGuard {
 public:
  explicit FreezeGuard(Network& net) : params_(net.parameters()) {
    for (auto& p : params_) {
      flags_.push_back(p.var.requires_grad());
      p.var.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var.set_requires_grad(flags_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<NamedParam> params_;
  std::vector<bool> flags_;
};

}  // namespace

ReconstructResult reconstruct(const GeneratorFn& gen, std::size_t latent_dim, const Tensor& targets,
                              const EvalConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("reconstruct: steps must be at least 1");
  if (latent_dim == 0) throw ConfigError("reconstruct: latent_dim must be positive");
  if (targets.rank() < 2) throw ShapeError("reconstruct: targets must be a batch, got " + shape_to_string(targets.shape()));
  const std::size_t n = targets.dim(0);
  const RMSPropConfig opt{cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps};

  Var z = Var::parameter(Tensor({n, latent_dim}));
  const Var x = Var::constant(targets);
  Tensor square_avg({n, latent_dim});
  ReconstructResult result;

  for (std::size_t step = 0;; ++step) {
    Objective o;
    try {
      o = objective(gen, z, x);
    } catch (const NumericError& e) {
      throw NumericError("reconstruct: step " + std::to_string(step) + ": " + e.what());
    }
    if (cfg.record_curve) result.curve.push_back(mean_of(o.per_sample));
    if (step == cfg.steps) {
      result.per_sample = std::move(o.per_sample);
      break;
    }
    z.zero_grad();
    try {
      backward(o.total);
      rmsprop_step(z.mutable_value(), square_avg, z.grad(), opt);
    } catch (const NumericError& e) {
      throw NumericError("reconstruct: step " + std::to_string(step) + ": " + e.what());
    }
  }
  result.z = z.value();
  return result;
}

GeneratorFn generator_fn(Network& gen) {
  return [&gen](const Var& z) { return gen.forward(z, Mode::Inference); };
}

EvalReport evaluate(Network& gen, const Tensor& targets, const std::vector<std::size_t>& indices,
                    const EvalConfig& cfg, const std::string& mode, const std::string& checkpoint_id) {
  if (targets.rank() < 2 || targets.dim(0) == 0) throw ConfigError("evaluation: empty test set");
  if (indices.size() != targets.dim(0)) throw ConfigError("evaluation: one index per target row is required");
  const auto t0 = std::chrono::steady_clock::now();
  FreezeGuard freeze(gen);
  const GeneratorFn fn = generator_fn(gen);
  const std::size_t latent = gen.spec().latent_dim;

  EvalReport r;
  r.mode = mode;
  r.checkpoint_id = checkpoint_id;
  r.steps = cfg.steps;
  r.lr = cfg.lr;
  r.requested = targets.dim(0);

  const std::size_t n = targets.dim(0);
  const std::size_t chunk = cfg.chunk_size == 0 ? n : cfg.chunk_size;
  std::vector<double> curve_sum(cfg.record_curve ? cfg.steps + 1 : 0, 0.0);
  auto add_curve = [&](const std::vector<double>& curve, std::size_t count) {
    for (std::size_t s = 0; s < curve_sum.size(); ++s) curve_sum[s] += curve[s] * static_cast<double>(count);
  };
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    try {
      ReconstructResult res = reconstruct(fn, latent, rows(targets, begin, end), cfg);
      for (std::size_t i = begin; i < end; ++i) {
        r.sample_indices.push_back(indices[i]);
        r.per_sample_loss.push_back(res.per_sample[i - begin]);
      }
      add_curve(res.curve, end - begin);
    } catch (const NumericError&) {
      // Retry one sample at a time so a single bad target only costs itself.
      for (std::size_t i = begin; i < end; ++i) {
        try {
          ReconstructResult res = reconstruct(fn, latent, rows(targets, i, i + 1), cfg);
          r.sample_indices.push_back(indices[i]);
          r.per_sample_loss.push_back(res.per_sample[0]);
          add_curve(res.curve, 1);
        } catch (const NumericError&) {
          r.skipped.push_back(indices[i]);
        }
      }
    }
  }
  r.mean_loss = mean_of(r.per_sample_loss);
  if (!r.per_sample_loss.empty()) {
    for (double v : curve_sum) r.curve.push_back(v / static_cast<double>(r.per_sample_loss.size()));
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

EvalReport running_eval(Network& gen, const Tensor& subset, const std::vector<std::size_t>& indices, EvalConfig cfg) {
  return evaluate(gen, subset, indices, cfg, "running");
}

EvalReport final_eval(Network& gen, const Tensor& test_set, const std::vector<std::size_t>& indices, EvalConfig cfg) {
  return evaluate(gen, test_set, indices, cfg, "final");
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["checkpoint"] = checkpoint_id;
  j["steps"] = steps;
  j["lr"] = lr;
  j["requested"] = requested;
  j["evaluated"] = per_sample_loss.size();
  j["skipped_count"] = skipped.size();
  j["skipped"] = skipped;
  j["mean_loss"] = mean_loss;
  j["wall_ms"] = wall_ms;
  j["sample_indices"] = sample_indices;
  j["per_sample_loss"] = per_sample_loss;
  if (!curve.empty()) j["loss_curve"] = curve;
  return j;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "index,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < per_sample_loss.size(); ++i) out << sample_indices[i] << ',' << per_sample_loss[i] << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

void EvalReport::write_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace wngan
