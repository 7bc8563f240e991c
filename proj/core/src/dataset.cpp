#include "wngan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "wngan/errors.hpp"
#include "wngan/image_io.hpp"

namespace wngan {

namespace {

constexpr std::uint64_t kDataStream = 0xDA7A;
constexpr std::uint64_t kSplitStream = 0x5B17;

Dataset from_points(std::string name, const Tensor& points) {
  Dataset d;
  d.name = std::move(name);
  d.sample_shape = {points.dim(1)};
  const std::size_t dim = points.dim(1);
  for (std::size_t i = 0; i < points.dim(0); ++i) {
    Tensor s({dim});
    for (std::size_t j = 0; j < dim; ++j) s[j] = points[i * dim + j];
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace

Tensor Dataset::batch(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ConfigError("dataset batch: no indices");
  const std::size_t per = sample_numel();
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= samples.size()) {
      throw ConfigError("dataset batch: index " + std::to_string(indices[i]) + " out of range " +
                        std::to_string(samples.size()));
    }
    std::copy(samples[indices[i]].data().begin(), samples[indices[i]].data().end(), out.data().begin() + i * per);
  }
  return out;
}

DatasetSplit split_dataset(std::size_t n, std::size_t test_size, std::uint64_t seed) {
  if (test_size == 0 || test_size >= n) {
    throw ConfigError("split: test size " + std::to_string(test_size) + " must be in [1, " + std::to_string(n) + ")");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  CounterRng rng(seed, kSplitStream);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
  DatasetSplit s;
  s.seed = seed;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(test_size));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(test_size), idx.end());
  return s;
}

Tensor sample_gauss2d_mixture(std::size_t n, std::size_t modes, double radius, double sigma, CounterRng& rng) {
  if (modes == 0) throw ConfigError("gauss2d-mixture: need at least one mode");
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(rng.below(modes)) / static_cast<double>(modes);
    out[2 * i] = radius * std::cos(angle) + sigma * rng.normal();
    out[2 * i + 1] = radius * std::sin(angle) + sigma * rng.normal();
  }
  return out;
}

Tensor sample_rings(std::size_t n, double sigma, CounterRng& rng) {
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(1 + rng.below(3)) + sigma * rng.normal();
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    out[2 * i] = r * std::cos(angle);
    out[2 * i + 1] = r * std::sin(angle);
  }
  return out;
}

Tensor sample_shape_8x8(CounterRng& rng) {
  static constexpr double kPalette[6][3] = {
      {1.0, 0.25, 0.25}, {0.25, 1.0, 0.25}, {0.25, 0.25, 1.0}, {1.0, 1.0, 0.25}, {0.25, 1.0, 1.0}, {1.0, 0.25, 1.0}};
  constexpr std::size_t s = 8;
  Tensor img({3, s, s});
  const auto& colour = kPalette[rng.below(6)];
  auto paint = [&](std::size_t y, std::size_t x) {
    for (std::size_t c = 0; c < 3; ++c) img[(c * s + y) * s + x] = colour[c];
  };
  switch (rng.below(4)) {
    case 0: {  // 3x3 square
      const std::size_t y0 = rng.below(s - 2), x0 = rng.below(s - 2);
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) paint(y0 + y, x0 + x);
      break;
    }
    case 1: {  // horizontal bar, 5 wide
      const std::size_t y0 = rng.below(s), x0 = rng.below(s - 4);
      for (std::size_t x = 0; x < 5; ++x) paint(y0, x0 + x);
      break;
    }
    case 2: {  // vertical bar, 5 tall
      const std::size_t y0 = rng.below(s - 4), x0 = rng.below(s);
      for (std::size_t y = 0; y < 5; ++y) paint(y0 + y, x0);
      break;
    }
    default: {  // plus sign in a 3x3 box
      const std::size_t y0 = rng.below(s - 2), x0 = rng.below(s - 2);
      for (std::size_t k = 0; k < 3; ++k) {
        paint(y0 + 1, x0 + k);
        paint(y0 + k, x0 + 1);
      }
      break;
    }
  }
  return img;
}

void normalize_per_channel(Dataset& data) {
  if (data.samples.empty()) return;
  const std::size_t channels = data.sample_shape[0];
  const std::size_t per_channel = data.sample_numel() / channels;
  std::vector<double> lo(channels, INFINITY), hi(channels, -INFINITY);
  for (const auto& s : data.samples) {
    for (std::size_t i = 0; i < s.numel(); ++i) {
      const std::size_t c = i / per_channel;
      lo[c] = std::min(lo[c], s[i]);
      hi[c] = std::max(hi[c], s[i]);
    }
  }
  for (auto& s : data.samples) {
    for (std::size_t i = 0; i < s.numel(); ++i) {
      const std::size_t c = i / per_channel;
      s[i] = hi[c] > lo[c] ? (s[i] - lo[c]) / (hi[c] - lo[c]) : 0.0;
    }
  }
}

Dataset load_image_dir(const std::string& dir, std::size_t image_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset '" + dir + "' is neither a builtin name nor a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("image directory '" + dir + "' contains no .ppm/.pgm files");

  Dataset d;
  d.name = "image-dir:" + dir;
  std::string unreadable;
  std::vector<std::pair<std::string, Shape>> shapes;
  for (const auto& f : files) {
    try {
      Tensor img = center_crop_square(read_pnm(f.string()));
      if (image_size != 0) img = resize_area(img, image_size);
      shapes.emplace_back(f.filename().string(), img.shape());
      d.samples.push_back(std::move(img));
    } catch (const Error& e) {
      unreadable += "\n  " + f.string() + ": " + e.what();
    }
  }
  if (!unreadable.empty()) throw IoError("unreadable images in '" + dir + "':" + unreadable);

  d.sample_shape = d.samples.front().shape();
  std::string offenders;
  for (const auto& [name, shape] : shapes) {
    if (shape != d.sample_shape) offenders += "\n  " + name + " " + shape_to_string(shape);
  }
  if (!offenders.empty()) {
    throw IoError("inconsistent image sizes in '" + dir + "' (expected " + shape_to_string(d.sample_shape) +
                  " after cropping):" + offenders);
  }
  normalize_per_channel(d);
  return d;
}

Dataset load_dataset(const std::string& name, const DatasetOptions& options) {
  CounterRng rng(options.seed, kDataStream);
  if (name == "gauss2d-mixture") {
    Dataset d = from_points(name, sample_gauss2d_mixture(options.size, 8, 2.0, 0.02, rng));
    normalize_per_channel(d);
    return d;
  }
  if (name == "rings") {
    Dataset d = from_points(name, sample_rings(options.size, 0.05, rng));
    normalize_per_channel(d);
    return d;
  }
  if (name == "synthetic-shapes-8x8") {
    Dataset d;
    d.name = name;
    d.sample_shape = {3, 8, 8};
    for (std::size_t i = 0; i < options.size; ++i) d.samples.push_back(sample_shape_8x8(rng));
    normalize_per_channel(d);
    return d;
  }
  const std::string prefix = "image-dir:";
  if (name.rfind(prefix, 0) == 0) return load_image_dir(name.substr(prefix.size()), options.image_size);
  return load_image_dir(name, options.image_size);
}

}  // namespace wngan
