#include "wngan/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

/// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw IoError("'" + path + "': truncated PNM header");
  return tok;
}

std::size_t header_number(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = header_token(in, path);
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || v == 0) throw IoError("'" + path + "': bad " + std::string(what) + " '" + tok + "'");
  return v;
}

}  // namespace

std::uint8_t to_byte(double v) {
  if (std::isnan(v)) return 0;
  v = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::nearbyint(v));
}

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  const std::string magic = header_token(in, path);
  std::size_t channels = 0;
  bool binary = false;
  if (magic == "P5" || magic == "P2") channels = 1;
  if (magic == "P6" || magic == "P3") channels = 3;
  binary = magic == "P5" || magic == "P6";
  if (channels == 0) throw IoError("'" + path + "': not a PGM/PPM file (magic '" + magic + "')");
  const std::size_t width = header_number(in, path, "width");
  const std::size_t height = header_number(in, path, "height");
  const std::size_t maxval = header_number(in, path, "maxval");
  if (maxval > 65535) throw IoError("'" + path + "': maxval " + std::to_string(maxval) + " exceeds 65535");

  const std::size_t count = width * height * channels;
  std::vector<double> interleaved(count);
  if (binary) {
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError("'" + path + "': truncated pixel data");
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t v = bytes_per == 2 ? (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1] : raw[i];
      interleaved[i] = static_cast<double>(v);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      long v = -1;
      if (!(in >> v) || v < 0) throw IoError("'" + path + "': bad or truncated ASCII pixel data");
      interleaved[i] = static_cast<double>(v);
    }
  }

  Tensor out({channels, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = interleaved[(y * width + x) * channels + c];
        if (v > static_cast<double>(maxval)) throw IoError("'" + path + "': sample exceeds maxval");
        out[(c * height + y) * width + x] = v / static_cast<double>(maxval);
      }
    }
  }
  return out;
}

void write_pnm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_pnm: expected [1|3, h, w], got " + shape_to_string(image.shape()));
  }
  const std::size_t c = image.dim(0);
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
  std::vector<char> bytes(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        bytes[(y * w + x) * c + ch] = static_cast<char>(to_byte(image[(ch * h + y) * w + x]));
      }
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for image '" + path + "'");
}

Tensor make_grid(const Tensor& batch, std::size_t cols, std::size_t pad, double background) {
  if (batch.rank() != 4) throw ShapeError("make_grid: expected [n, c, h, w], got " + shape_to_string(batch.shape()));
  if (cols == 0) throw ConfigError("make_grid: cols must be positive");
  const std::size_t n = batch.dim(0);
  const std::size_t c = batch.dim(1);
  const std::size_t h = batch.dim(2);
  const std::size_t w = batch.dim(3);
  cols = std::min(cols, n);
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t gh = rows * h + (rows + 1) * pad;
  const std::size_t gw = cols * w + (cols + 1) * pad;
  Tensor grid({c, gh, gw}, background);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = pad + (i / cols) * (h + pad);
    const std::size_t ox = pad + (i % cols) * (w + pad);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          grid[(ch * gh + oy + y) * gw + ox + x] = batch[((i * c + ch) * h + y) * w + x];
        }
      }
    }
  }
  return grid;
}

Tensor render_scatter(const Tensor& points, std::size_t size) {
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw ShapeError("render_scatter: expected [n, 2], got " + shape_to_string(points.shape()));
  }
  if (size < 2) throw ConfigError("render_scatter: size must be at least 2");
  Tensor img({3, size, size});
  const double scale = static_cast<double>(size - 1);
  for (std::size_t i = 0; i < points.dim(0); ++i) {
    const double px = std::clamp(points[2 * i], 0.0, 1.0);
    const double py = std::clamp(points[2 * i + 1], 0.0, 1.0);
    const auto x = static_cast<std::size_t>(std::lround(px * scale));
    const auto y = size - 1 - static_cast<std::size_t>(std::lround(py * scale));
    for (std::size_t c = 0; c < 3; ++c) img[(c * size + y) * size + x] = 1.0;
  }
  return img;
}

Tensor center_crop_square(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("center_crop_square: expected [c, h, w]");
  const std::size_t c = image.dim(0);
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  const std::size_t s = std::min(h, w);
  const std::size_t oy = (h - s) / 2;
  const std::size_t ox = (w - s) / 2;
  Tensor out({c, s, s});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) out[(ch * s + y) * s + x] = image[(ch * h + oy + y) * w + ox + x];
    }
  }
  return out;
}

Tensor resize_area(const Tensor& image, std::size_t target) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw ShapeError("resize_area: expected a square [c, s, s] image, got " + shape_to_string(image.shape()));
  }
  if (target == 0) throw ConfigError("resize_area: target size must be positive");
  const std::size_t c = image.dim(0);
  const std::size_t s = image.dim(1);
  if (s == target) return image;
  // Output pixel i covers source interval [i*s/t, (i+1)*s/t).
  const double ratio = static_cast<double>(s) / static_cast<double>(target);
  std::vector<std::vector<std::pair<std::size_t, double>>> taps(target);
  for (std::size_t i = 0; i < target; ++i) {
    const double lo = static_cast<double>(i) * ratio;
    const double hi = static_cast<double>(i + 1) * ratio;
    for (auto j = static_cast<std::size_t>(std::floor(lo)); j < s && static_cast<double>(j) < hi; ++j) {
      const double overlap = std::min(hi, static_cast<double>(j + 1)) - std::max(lo, static_cast<double>(j));
      if (overlap > 0.0) taps[i].emplace_back(j, overlap / ratio);
    }
  }
  Tensor out({c, target, target});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < target; ++y) {
      for (std::size_t x = 0; x < target; ++x) {
        double acc = 0.0;
        for (const auto& [sy, wy] : taps[y]) {
          for (const auto& [sx, wx] : taps[x]) acc += wy * wx * image[(ch * s + sy) * s + sx];
        }
        out[(ch * target + y) * target + x] = acc;
      }
    }
  }
  return out;
}

}  // namespace wngan
