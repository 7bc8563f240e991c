#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wngan/tensor.hpp"

namespace wngan {

enum class NetRole { Discriminator, Generator };
enum class Variant { Vanilla, BN, WN };
enum class Architecture { MLP, DCGAN, ResNet };

enum class LayerKind {
  Linear,
  StrictWNLinear,
  AffineWNLinear,
  Conv,
  ConvTranspose,
  StrictWNConv,
  AffineWNConv,
  StrictWNConvTranspose,
  AffineWNConvTranspose,
  WNFullyConnectedToMap,
  PReLU,
  TPReLU,
  BatchNorm,
  MeanOnlyBatchNorm,
  Sigmoid,
  AvgPool2,
  Upsample2,
  ResBlock,
};

std::string to_string(NetRole role);
std::string to_string(Variant variant);
std::string to_string(Architecture arch);
std::string to_string(LayerKind kind);
NetRole parse_role(const std::string& s);
Variant parse_variant(const std::string& s);
Architecture parse_architecture(const std::string& s);
LayerKind parse_layer_kind(const std::string& s);

/// One residual block. Generator blocks (`transposed`) use transposed convs
/// and upsample on the shortcut where discriminator blocks pool.
struct ResBlockSpec {
  std::size_t stride = 1;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  Variant variant = Variant::Vanilla;
  bool transposed = false;
  /// Output block of a generator: no trailing activation, and for the wn
  /// variant its last residue conv and shortcut conv are affine.
  bool last = false;

  bool operator==(const ResBlockSpec&) const = default;
};

/// Flat description of one layer. Unused fields stay 0.
struct LayerDesc {
  LayerKind kind = LayerKind::Linear;
  std::size_t in = 0;   // input features / channels
  std::size_t out = 0;  // output features / channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t height = 0;  // wn_fc_to_map output map size
  std::size_t width = 0;
  std::optional<ResBlockSpec> block;

  bool operator==(const LayerDesc&) const = default;
};

struct NetworkSpec {
  NetRole role = NetRole::Discriminator;
  Variant variant = Variant::Vanilla;
  Architecture architecture = Architecture::MLP;
  /// Shape of one data sample: [d] or [channels, height, width].
  Shape data_shape;
  std::size_t base_features = 0;
  std::size_t latent_dim = 0;
  /// Set by make_critic: trailing sigmoid removed, final layer strict.
  bool critic = false;
  std::vector<LayerDesc> layers;

  /// Shape of one network input: data_shape for a discriminator, [latent_dim]
  /// for a generator.
  Shape input_shape() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct GanSpecs {
  NetworkSpec discriminator;
  NetworkSpec generator;
};

/// Strided k4 s2 p1 convolutions from `base_features`, doubling, until the
/// map is at most `min_spatial` wide; then one full-extent conv to a single
/// output and a sigmoid. The generator mirrors it with transposed convs.
GanSpecs build_dcgan(Variant variant, std::size_t image_size, std::size_t base_features, std::size_t latent_dim,
                     std::size_t min_spatial, std::size_t channels = 3);

/// One level per entry of `feature_plan`: a stride-2 block then a stride-1
/// block, followed by a full-extent conv. `image_size` must halve cleanly
/// once per level.
GanSpecs build_resnet_gan(Variant variant, const std::vector<std::size_t>& feature_plan, std::size_t latent_dim,
                          std::size_t image_size = 160, std::size_t channels = 3);

/// Two weight layers per network over flat vectors of length `data_dim`.
GanSpecs build_mlp_gan(Variant variant, std::size_t data_dim, std::size_t hidden, std::size_t latent_dim);

/// Layers of a residual block, in execution order.
struct BlockLayout {
  std::vector<LayerDesc> residue;
  std::vector<LayerDesc> shortcut;
  bool wn_add = false;
  std::optional<LayerDesc> activation;
};
BlockLayout expand_block(const ResBlockSpec& block);

/// Conv, transposed conv, linear and fully connected layers, counting those
/// on residue branches of blocks (shortcut projections are not counted).
std::size_t count_weight_layers(const NetworkSpec& spec);

bool is_weight_layer(LayerKind kind);
bool is_affine_wn(LayerKind kind);
bool is_strict_wn(LayerKind kind);
bool is_activation(LayerKind kind);

/// Kernel, stride, padding and output features of each top-level weight
/// layer, in order. A wn_fc_to_map layer reports its map size as the kernel.
struct ConvRow {
  LayerKind kind;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
  std::size_t out;
  bool operator==(const ConvRow&) const = default;
};
std::vector<ConvRow> conv_table(const NetworkSpec& spec);

/// Canonical JSON: fixed field order, so equal specs serialize identically.
nlohmann::ordered_json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);
std::string to_canonical_string(const NetworkSpec& spec);

}  // namespace wngan
