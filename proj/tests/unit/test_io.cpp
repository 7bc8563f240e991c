#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_util.hpp"
#include "wngan/checkpoint.hpp"
#include "wngan/config.hpp"
#include "wngan/dataset.hpp"
#include "wngan/errors.hpp"
#include "wngan/image_io.hpp"
#include "wngan/training.hpp"

using namespace wngan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wngan_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Checkpoint sample_checkpoint() {
  TrainConfig c;
  c.batch_size = 4;
  c.hidden = 8;
  c.latent_dim = 3;
  GanState s(c, Variant::BN, Shape{2});
  Tensor real({4, 2});
  for (std::size_t i = 0; i < real.numel(); ++i) real[i] = 0.1 * static_cast<double>(i);
  train_step(s, real, 1);
  s.iteration = 1;
  s.best_running_loss = 0.125;
  return capture(s, {{"note", "x"}});
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, SerializeRoundTripIsBitwise) {
  const Checkpoint c = sample_checkpoint();
  const auto bytes = serialize(c);
  const Checkpoint back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.tensors, c.tensors);
  EXPECT_EQ(back.optimizer, c.optimizer);
  EXPECT_EQ(back.rng_counter, c.rng_counter);
  EXPECT_EQ(back.best_running_loss, 0.125);
  EXPECT_EQ(back.meta, c.meta);
}

TEST(Checkpoint, FileRoundTripRestoresState) {
  const fs::path dir = scratch("ckpt");
  const Checkpoint c = sample_checkpoint();
  save_checkpoint((dir / "a.bin").string(), c);
  EXPECT_FALSE(fs::exists(dir / "a.bin.tmp"));
  const Checkpoint back = load_checkpoint((dir / "a.bin").string());
  GanState s = state_from_checkpoint(back);
  EXPECT_EQ(serialize(capture(s, {{"note", "x"}})), serialize(c));
}

TEST(Checkpoint, MagicStartsFile) {
  const auto bytes = serialize(sample_checkpoint());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), std::string("WNGAN1\0", 7));
}

TEST(Checkpoint, CorruptionIsReported) {
  const auto good = serialize(sample_checkpoint());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), IoError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    EXPECT_THROW(deserialize(std::vector<std::uint8_t>(good.begin(), good.begin() + cut)), IoError) << cut;
  }
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(deserialize(trailing), IoError);
  EXPECT_THROW(load_checkpoint("/nonexistent/wngan.bin"), IoError);
}

TEST(Checkpoint, WrongTensorShapeRejectedOnRestore) {
  Checkpoint c = sample_checkpoint();
  c.tensors.front().second = Tensor({1});
  EXPECT_THROW(state_from_checkpoint(c), IoError);
}

// ---------------------------------------------------------------------------
// Images

TEST(ImageIo, ToByteRoundsHalfToEven) {
  EXPECT_EQ(to_byte(0.0), 0);
  EXPECT_EQ(to_byte(1.0), 255);
  EXPECT_EQ(to_byte(-3.0), 0);
  EXPECT_EQ(to_byte(7.0), 255);
  EXPECT_EQ(to_byte(NAN), 0);
  EXPECT_EQ(to_byte(0.5 / 255.0), 0);   // 0.5 -> 0
  EXPECT_EQ(to_byte(1.5 / 255.0), 2);   // 1.5 -> 2
  EXPECT_EQ(to_byte(2.5 / 255.0), 2);   // 2.5 -> 2
  EXPECT_EQ(to_byte(0.5), 128);         // 127.5 -> 128
}

TEST(ImageIo, PpmRoundTripIsExactOnByteGrid) {
  const fs::path dir = scratch("ppm");
  Tensor img({3, 4, 5});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>((i * 37) % 256) / 255.0;
  write_pnm((dir / "a.ppm").string(), img);
  EXPECT_EQ(read_pnm((dir / "a.ppm").string()), img);
  Tensor gray({1, 3, 2});
  for (std::size_t i = 0; i < gray.numel(); ++i) gray[i] = static_cast<double>(i) / 255.0;
  write_pnm((dir / "g.pgm").string(), gray);
  EXPECT_EQ(read_pnm((dir / "g.pgm").string()), gray);
}

TEST(ImageIo, ReadsAsciiWithComments) {
  const fs::path dir = scratch("ascii");
  write_bytes(dir / "a.pgm", "P2\n# comment\n2 1\n# another\n10\n0 5\n");
  const Tensor t = read_pnm((dir / "a.pgm").string());
  EXPECT_EQ(t.shape(), (Shape{1, 1, 2}));
  EXPECT_DOUBLE_EQ(t[1], 0.5);
}

TEST(ImageIo, MalformedFilesRejected) {
  const fs::path dir = scratch("bad");
  write_bytes(dir / "a.ppm", "P9\n1 1\n255\n\x01\x02\x03");
  EXPECT_THROW(read_pnm((dir / "a.ppm").string()), IoError);
  write_bytes(dir / "b.ppm", "P6\n2 2\n255\n\x01\x02\x03");
  EXPECT_THROW(read_pnm((dir / "b.ppm").string()), IoError);
  EXPECT_THROW(write_pnm((dir / "c.ppm").string(), Tensor({2, 2, 2})), ShapeError);
}

TEST(ImageIo, GridLayout) {
  Tensor batch({3, 1, 2, 2}, 1.0);
  const Tensor g = make_grid(batch, 2, 1, 0.0);
  // Two tile rows and columns of 2 pixels, with 1-pixel borders: 7 x 7.
  EXPECT_EQ(g.shape(), (Shape{1, 7, 7}));
  EXPECT_EQ(g[0], 0.0);          // outer border
  EXPECT_EQ(g[1 * 7 + 1], 1.0);  // first tile
  EXPECT_EQ(g[1 * 7 + 3], 0.0);  // separator column
  EXPECT_EQ(g[4 * 7 + 4], 0.0);  // empty fourth slot
  EXPECT_EQ(g[4 * 7 + 1], 1.0);  // third tile
}

TEST(ImageIo, CropAndResize) {
  Tensor img({1, 2, 4});
  for (std::size_t i = 0; i < 8; ++i) img[i] = static_cast<double>(i);
  const Tensor c = center_crop_square(img);
  EXPECT_EQ(c, Tensor({1, 2, 2}, {1, 2, 5, 6}));
  const Tensor r = resize_area(c, 1);
  EXPECT_DOUBLE_EQ(r[0], 3.5);
}

// ---------------------------------------------------------------------------
// Datasets

TEST(Dataset, GaussianMixtureStaysNearModes) {
  CounterRng rng(3, 1);
  const Tensor pts = sample_gauss2d_mixture(5000, 8, 2.0, 0.02, rng);
  for (std::size_t i = 0; i < 5000; ++i) {
    double best = 1e9;
    for (int m = 0; m < 8; ++m) {
      const double a = 2.0 * M_PI * m / 8.0;
      best = std::min(best, std::hypot(pts[2 * i] - 2.0 * std::cos(a), pts[2 * i + 1] - 2.0 * std::sin(a)));
    }
    ASSERT_LT(best, 6.0 * 0.02 * std::sqrt(2.0));
  }
}

TEST(Dataset, BuiltinsAreNormalizedAndSeeded) {
  for (const char* name : {"gauss2d-mixture", "rings", "synthetic-shapes-8x8"}) {
    const Dataset a = load_dataset(name, {300, 4, 0});
    const Dataset b = load_dataset(name, {300, 4, 0});
    ASSERT_EQ(a.size(), 300u);
    EXPECT_EQ(a.samples, b.samples) << name;
    double lo = 1e9, hi = -1e9;
    for (const auto& s : a.samples)
      for (double v : s.data()) lo = std::min(lo, v), hi = std::max(hi, v);
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 1.0);
  }
}

TEST(Dataset, ImageDirectoryLoads) {
  const fs::path dir = scratch("imgdir");
  for (int i = 0; i < 3; ++i) {
    Tensor img({3, 16, 20});
    for (std::size_t j = 0; j < img.numel(); ++j) img[j] = static_cast<double>((j + i) % 255) / 255.0;
    write_pnm((dir / ("im" + std::to_string(i) + ".ppm")).string(), img);
  }
  write_bytes(dir / "readme.txt", "ignored");
  const Dataset d = load_dataset("image-dir:" + dir.string(), {0, 1, 8});
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.sample_shape, (Shape{3, 8, 8}));
  const Dataset full = load_image_dir(dir.string(), 0);
  EXPECT_EQ(full.sample_shape, (Shape{3, 16, 16}));
}

TEST(Dataset, EmptyOrMissingDirectoryRejected) {
  EXPECT_THROW(load_dataset(scratch("empty").string(), {}), IoError);
  EXPECT_THROW(load_dataset("/nonexistent/wngan_dir", {}), IoError);
}

TEST(Dataset, SplitIsDeterministicAndDisjoint) {
  const DatasetSplit a = split_dataset(500, 50, 9);
  const DatasetSplit b = split_dataset(500, 50, 9);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test.size(), 50u);
  EXPECT_EQ(a.train.size(), 450u);
  std::set<std::size_t> all(a.test.begin(), a.test.end());
  all.insert(a.train.begin(), a.train.end());
  EXPECT_EQ(all.size(), 500u);
  EXPECT_NE(split_dataset(500, 50, 10).test, a.test);
  EXPECT_THROW(split_dataset(10, 10, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, JsonRoundTrip) {
  TrainConfig c;
  c.architecture = "dcgan";
  c.lr = 3e-4;
  c.feature_plan = {4, 8, 16};
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, UnknownKeyRejected) {
  nlohmann::json j = to_json(TrainConfig{});
  j["learning_rate"] = 0.1;
  try {
    train_config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
}

TEST(Config, PartialJsonKeepsDefaults) {
  const TrainConfig c = train_config_from_json({{"batch_size", 8}});
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.lr, 1e-4);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(train_config_from_json({{"batch_size", "eight"}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"architecture", "transformer"}}), ConfigError);
}

TEST(Config, MissingFileRejected) { EXPECT_THROW(load_train_config("/nonexistent/cfg.json"), IoError); }
