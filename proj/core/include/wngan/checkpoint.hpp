#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wngan/tensor.hpp"

namespace wngan {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Everything needed to resume a run.
///
/// Byte layout (integers little-endian):
///   "WNGAN1\0"                      7-byte magic
///   u64 n, n bytes                  JSON {"generator", "discriminator", "config"}
///   u64 count, count tensor records parameters and buffers
///   u64 count, count tensor records optimizer state
///   u64 rng seed, u64 rng counter, u64 iteration, f64 best running loss
/// Tensor record: u32 name length, name bytes, u8 dtype (1 = f64),
///   u32 rank, rank x u64 dims, numel x f64.
struct Checkpoint {
  nlohmann::json meta;
  NamedTensors tensors;
  NamedTensors optimizer;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::uint64_t iteration = 0;
  double best_running_loss = 0.0;
};

std::vector<std::uint8_t> serialize(const Checkpoint& c);
/// Throws IoError on a bad magic, truncation, unknown dtype or trailing bytes.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wngan
