#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wngan/rng.hpp"
#include "wngan/tensor.hpp"

namespace wngan {

/// Samples of identical shape, each channel scaled into [0, 1].
struct Dataset {
  std::string name;
  Shape sample_shape;  // [d] or [c, h, w]
  std::vector<Tensor> samples;

  std::size_t size() const { return samples.size(); }
  /// Stacks the indexed samples into [indices.size(), ...sample_shape].
  Tensor batch(const std::vector<std::size_t>& indices) const;
  std::size_t sample_numel() const { return shape_numel(sample_shape); }
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle of [0, n); the first `test_size` indices form the test set.
DatasetSplit split_dataset(std::size_t n, std::size_t test_size, std::uint64_t seed);

struct DatasetOptions {
  std::size_t size = 2048;      // builtin generators
  std::uint64_t seed = 1;
  std::size_t image_size = 0;   // image-dir: resize target, 0 keeps the crop
};

/// Raw 2-D mixture: `modes` isotropic Gaussians (std `sigma`) centred evenly
/// on a circle of `radius`. Returns [n, 2] before any normalization.
Tensor sample_gauss2d_mixture(std::size_t n, std::size_t modes, double radius, double sigma, CounterRng& rng);
/// Raw 2-D concentric rings of radii 1, 2, 3 with radial noise `sigma`.
Tensor sample_rings(std::size_t n, double sigma, CounterRng& rng);
/// One 3x8x8 image: a bar, cross or square in a random colour on black.
Tensor sample_shape_8x8(CounterRng& rng);

/// Rescales each channel of every sample by the dataset-wide min and max so
/// values span [0, 1]. A constant channel becomes 0.
void normalize_per_channel(Dataset& data);

/// builtin: gauss2d-mixture, rings, synthetic-shapes-8x8. Anything else is
/// taken as a directory of .ppm/.pgm files (optionally prefixed "image-dir:").
Dataset load_dataset(const std::string& name_or_path, const DatasetOptions& options);
Dataset load_image_dir(const std::string& dir, std::size_t image_size);

}  // namespace wngan
