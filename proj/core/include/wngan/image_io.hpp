#pragma once

#include <cstdint>
#include <string>

#include "wngan/tensor.hpp"

namespace wngan {

/// Reads a binary (P5/P6) or ASCII (P2/P3) PGM/PPM file into a [c, h, w]
/// tensor with values in [0, 1] (sample / maxval). c is 1 for PGM, 3 for PPM.
Tensor read_pnm(const std::string& path);

/// Writes a [1, h, w] tensor as binary PGM or a [3, h, w] tensor as binary
/// PPM with maxval 255. Values are clamped to [0, 1] and quantized by
/// to_byte.
void write_pnm(const std::string& path, const Tensor& image);

/// round(clamp(v, 0, 1) * 255) with ties to even; NaN maps to 0.
std::uint8_t to_byte(double v);

/// Tiles a batch [n, c, h, w] into one [c, H, W] image, `cols` per row.
/// Tiles are separated and surrounded by `pad` pixels of `background`.
Tensor make_grid(const Tensor& batch, std::size_t cols, std::size_t pad = 1, double background = 0.0);

/// Plots points [n, 2] with coordinates in [0, 1] as white dots on a
/// [3, size, size] black canvas; y grows upwards.
Tensor render_scatter(const Tensor& points, std::size_t size = 64);

/// Center-crops a [c, h, w] image to its shorter side.
Tensor center_crop_square(const Tensor& image);
/// Area-averaging resize of a square [c, s, s] image to [c, target, target].
Tensor resize_area(const Tensor& image, std::size_t target);

}  // namespace wngan
