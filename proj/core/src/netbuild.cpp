#include "wngan/netbuild.hpp"

#include <array>
#include <utility>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 18> kLayerKindNames{{
    {LayerKind::Linear, "linear"},
    {LayerKind::StrictWNLinear, "strict_wn_linear"},
    {LayerKind::AffineWNLinear, "affine_wn_linear"},
    {LayerKind::Conv, "conv"},
    {LayerKind::ConvTranspose, "conv_transpose"},
    {LayerKind::StrictWNConv, "strict_wn_conv"},
    {LayerKind::AffineWNConv, "affine_wn_conv"},
    {LayerKind::StrictWNConvTranspose, "strict_wn_conv_transpose"},
    {LayerKind::AffineWNConvTranspose, "affine_wn_conv_transpose"},
    {LayerKind::WNFullyConnectedToMap, "wn_fc_to_map"},
    {LayerKind::PReLU, "prelu"},
    {LayerKind::TPReLU, "tprelu"},
    {LayerKind::BatchNorm, "batchnorm"},
    {LayerKind::MeanOnlyBatchNorm, "mean_only_batchnorm"},
    {LayerKind::Sigmoid, "sigmoid"},
    {LayerKind::AvgPool2, "avg_pool2"},
    {LayerKind::Upsample2, "upsample2"},
    {LayerKind::ResBlock, "resblock"},
}};

LayerDesc weighted(LayerKind kind, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t pad) {
  LayerDesc d;
  d.kind = kind;
  d.in = in;
  d.out = out;
  d.kernel = k;
  d.stride = stride;
  d.pad = pad;
  return d;
}

LayerDesc per_channel(LayerKind kind, std::size_t channels) {
  LayerDesc d;
  d.kind = kind;
  d.in = channels;
  d.out = channels;
  return d;
}

LayerDesc plain(LayerKind kind) {
  LayerDesc d;
  d.kind = kind;
  return d;
}

LayerDesc activation_for(Variant v, std::size_t channels) {
  return per_channel(v == Variant::WN ? LayerKind::TPReLU : LayerKind::PReLU, channels);
}

LayerKind conv_kind(Variant v, bool transposed, bool affine) {
  if (v != Variant::WN) return transposed ? LayerKind::ConvTranspose : LayerKind::Conv;
  if (transposed) return affine ? LayerKind::AffineWNConvTranspose : LayerKind::StrictWNConvTranspose;
  return affine ? LayerKind::AffineWNConv : LayerKind::StrictWNConv;
}

LayerKind linear_kind(Variant v, bool affine) {
  if (v != Variant::WN) return LayerKind::Linear;
  return affine ? LayerKind::AffineWNLinear : LayerKind::StrictWNLinear;
}

/// Generator input layer mapping the latent code to a [c, s, s] map.
LayerDesc generator_head(Variant v, std::size_t latent, std::size_t channels, std::size_t spatial) {
  if (v == Variant::WN) {
    LayerDesc d = weighted(LayerKind::WNFullyConnectedToMap, latent, channels, spatial, 1, 0);
    d.height = spatial;
    d.width = spatial;
    return d;
  }
  return weighted(LayerKind::ConvTranspose, latent, channels, spatial, 1, 0);
}

void require_positive(std::size_t value, const char* what) {
  if (value == 0) throw ConfigError(std::string(what) + " must be positive");
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<E, const char*>> table, const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

nlohmann::ordered_json block_to_json(const ResBlockSpec& b) {
  nlohmann::ordered_json j;
  j["stride"] = b.stride;
  j["c_in"] = b.c_in;
  j["c_out"] = b.c_out;
  j["variant"] = to_string(b.variant);
  j["transposed"] = b.transposed;
  j["last"] = b.last;
  return j;
}

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("network spec: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network spec: bad field '") + key + "': " + e.what());
  }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError(std::string(where) + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace

std::string to_string(NetRole role) { return role == NetRole::Discriminator ? "discriminator" : "generator"; }

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::Vanilla: return "vanilla";
    case Variant::BN: return "bn";
    case Variant::WN: return "wn";
  }
  return "?";
}

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::MLP: return "mlp";
    case Architecture::DCGAN: return "dcgan";
    case Architecture::ResNet: return "resnet";
  }
  return "?";
}

std::string to_string(LayerKind kind) {
  for (const auto& [k, name] : kLayerKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

NetRole parse_role(const std::string& s) {
  return parse_enum<NetRole>(s, {{NetRole::Discriminator, "discriminator"}, {NetRole::Generator, "generator"}},
                             "role");
}

Variant parse_variant(const std::string& s) {
  return parse_enum<Variant>(s, {{Variant::Vanilla, "vanilla"}, {Variant::BN, "bn"}, {Variant::WN, "wn"}},
                             "variant");
}

Architecture parse_architecture(const std::string& s) {
  return parse_enum<Architecture>(
      s, {{Architecture::MLP, "mlp"}, {Architecture::DCGAN, "dcgan"}, {Architecture::ResNet, "resnet"}},
      "architecture");
}

LayerKind parse_layer_kind(const std::string& s) {
  for (const auto& [k, name] : kLayerKindNames) {
    if (s == name) return k;
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

Shape NetworkSpec::input_shape() const {
  if (role == NetRole::Generator) return {latent_dim};
  return data_shape;
}

bool is_weight_layer(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear:
    case LayerKind::StrictWNLinear:
    case LayerKind::AffineWNLinear:
    case LayerKind::Conv:
    case LayerKind::ConvTranspose:
    case LayerKind::StrictWNConv:
    case LayerKind::AffineWNConv:
    case LayerKind::StrictWNConvTranspose:
    case LayerKind::AffineWNConvTranspose:
    case LayerKind::WNFullyConnectedToMap:
      return true;
    default:
      return false;
  }
}

bool is_affine_wn(LayerKind kind) {
  return kind == LayerKind::AffineWNLinear || kind == LayerKind::AffineWNConv ||
         kind == LayerKind::AffineWNConvTranspose;
}

bool is_strict_wn(LayerKind kind) {
  return kind == LayerKind::StrictWNLinear || kind == LayerKind::StrictWNConv ||
         kind == LayerKind::StrictWNConvTranspose || kind == LayerKind::WNFullyConnectedToMap;
}

bool is_activation(LayerKind kind) { return kind == LayerKind::PReLU || kind == LayerKind::TPReLU; }

GanSpecs build_dcgan(Variant variant, std::size_t image_size, std::size_t base_features, std::size_t latent_dim,
                     std::size_t min_spatial, std::size_t channels) {
  require_positive(image_size, "image_size");
  require_positive(base_features, "base_features");
  require_positive(latent_dim, "latent_dim");
  require_positive(min_spatial, "min_spatial");
  require_positive(channels, "channels");
  if (image_size <= min_spatial) {
    throw ConfigError("image size " + std::to_string(image_size) + " is not reducible to min_spatial " +
                      std::to_string(min_spatial) + ": no strided layer would be built");
  }

  std::vector<std::size_t> features;
  std::size_t spatial = image_size;
  std::size_t f = base_features;
  while (spatial > min_spatial) {
    if (spatial % 2 != 0) {
      throw ConfigError("image size " + std::to_string(image_size) + " is not reducible to min_spatial " +
                        std::to_string(min_spatial) + ": halving reaches odd size " + std::to_string(spatial));
    }
    spatial /= 2;
    features.push_back(f);
    f *= 2;
  }

  GanSpecs out;
  NetworkSpec& d = out.discriminator;
  NetworkSpec& g = out.generator;
  for (NetworkSpec* s : {&d, &g}) {
    s->variant = variant;
    s->architecture = Architecture::DCGAN;
    s->data_shape = {channels, image_size, image_size};
    s->base_features = base_features;
    s->latent_dim = latent_dim;
  }
  d.role = NetRole::Discriminator;
  g.role = NetRole::Generator;

  std::size_t c = channels;
  for (std::size_t i = 0; i < features.size(); ++i) {
    d.layers.push_back(weighted(conv_kind(variant, false, false), c, features[i], 4, 2, 1));
    if (variant == Variant::BN && i > 0) d.layers.push_back(per_channel(LayerKind::BatchNorm, features[i]));
    d.layers.push_back(activation_for(variant, features[i]));
    c = features[i];
  }
  d.layers.push_back(weighted(conv_kind(variant, false, true), c, 1, spatial, 1, 0));
  d.layers.push_back(plain(LayerKind::Sigmoid));

  g.layers.push_back(generator_head(variant, latent_dim, features.back(), spatial));
  if (variant == Variant::BN) g.layers.push_back(per_channel(LayerKind::BatchNorm, features.back()));
  g.layers.push_back(activation_for(variant, features.back()));
  for (std::size_t i = features.size() - 1; i > 0; --i) {
    g.layers.push_back(weighted(conv_kind(variant, true, false), features[i], features[i - 1], 4, 2, 1));
    if (variant == Variant::BN) g.layers.push_back(per_channel(LayerKind::BatchNorm, features[i - 1]));
    g.layers.push_back(activation_for(variant, features[i - 1]));
  }
  g.layers.push_back(weighted(conv_kind(variant, true, true), features.front(), channels, 4, 2, 1));
  g.layers.push_back(plain(LayerKind::Sigmoid));
  return out;
}

GanSpecs build_resnet_gan(Variant variant, const std::vector<std::size_t>& feature_plan, std::size_t latent_dim,
                          std::size_t image_size, std::size_t channels) {
  if (feature_plan.empty()) throw ConfigError("resnet feature plan must not be empty");
  for (std::size_t f : feature_plan) require_positive(f, "resnet feature plan entry");
  require_positive(latent_dim, "latent_dim");
  require_positive(image_size, "image_size");
  require_positive(channels, "channels");

  std::size_t spatial = image_size;
  for (std::size_t i = 0; i < feature_plan.size(); ++i) {
    if (spatial % 2 != 0 || spatial < 2) {
      throw ConfigError("image size " + std::to_string(image_size) + " cannot be halved " +
                        std::to_string(feature_plan.size()) + " times");
    }
    spatial /= 2;
  }

  GanSpecs out;
  NetworkSpec& d = out.discriminator;
  NetworkSpec& g = out.generator;
  for (NetworkSpec* s : {&d, &g}) {
    s->variant = variant;
    s->architecture = Architecture::ResNet;
    s->data_shape = {channels, image_size, image_size};
    s->base_features = feature_plan.front();
    s->latent_dim = latent_dim;
  }
  d.role = NetRole::Discriminator;
  g.role = NetRole::Generator;

  auto block = [&](std::size_t stride, std::size_t c_in, std::size_t c_out, bool transposed, bool last) {
    LayerDesc desc = per_channel(LayerKind::ResBlock, 0);
    desc.in = c_in;
    desc.out = c_out;
    desc.stride = stride;
    desc.block = ResBlockSpec{stride, c_in, c_out, variant, transposed, last};
    return desc;
  };

  std::size_t c = channels;
  for (std::size_t f : feature_plan) {
    d.layers.push_back(block(2, c, f, false, false));
    d.layers.push_back(block(1, f, f, false, false));
    c = f;
  }
  d.layers.push_back(weighted(conv_kind(variant, false, true), c, 1, spatial, 1, 0));
  d.layers.push_back(plain(LayerKind::Sigmoid));

  g.layers.push_back(generator_head(variant, latent_dim, feature_plan.back(), spatial));
  if (variant == Variant::BN) g.layers.push_back(per_channel(LayerKind::BatchNorm, feature_plan.back()));
  g.layers.push_back(activation_for(variant, feature_plan.back()));
  for (std::size_t i = feature_plan.size(); i-- > 0;) {
    const std::size_t f = feature_plan[i];
    const std::size_t c_prev = i == 0 ? channels : feature_plan[i - 1];
    g.layers.push_back(block(1, f, f, true, false));
    g.layers.push_back(block(2, f, c_prev, true, i == 0));
  }
  g.layers.push_back(plain(LayerKind::Sigmoid));
  return out;
}

GanSpecs build_mlp_gan(Variant variant, std::size_t data_dim, std::size_t hidden, std::size_t latent_dim) {
  require_positive(data_dim, "data_dim");
  require_positive(hidden, "hidden");
  require_positive(latent_dim, "latent_dim");

  GanSpecs out;
  NetworkSpec& d = out.discriminator;
  NetworkSpec& g = out.generator;
  for (NetworkSpec* s : {&d, &g}) {
    s->variant = variant;
    s->architecture = Architecture::MLP;
    s->data_shape = {data_dim};
    s->base_features = hidden;
    s->latent_dim = latent_dim;
  }
  d.role = NetRole::Discriminator;
  g.role = NetRole::Generator;

  d.layers.push_back(weighted(linear_kind(variant, false), data_dim, hidden, 0, 1, 0));
  d.layers.push_back(activation_for(variant, hidden));
  d.layers.push_back(weighted(linear_kind(variant, true), hidden, 1, 0, 1, 0));
  d.layers.push_back(plain(LayerKind::Sigmoid));

  g.layers.push_back(weighted(linear_kind(variant, false), latent_dim, hidden, 0, 1, 0));
  if (variant == Variant::BN) g.layers.push_back(per_channel(LayerKind::BatchNorm, hidden));
  g.layers.push_back(activation_for(variant, hidden));
  g.layers.push_back(weighted(linear_kind(variant, true), hidden, data_dim, 0, 1, 0));
  g.layers.push_back(plain(LayerKind::Sigmoid));
  return out;
}

BlockLayout expand_block(const ResBlockSpec& b) {
  require_positive(b.c_in, "block c_in");
  require_positive(b.c_out, "block c_out");
  if (b.stride != 1 && b.stride != 2) throw ConfigError("block stride must be 1 or 2");

  BlockLayout layout;
  const bool bn = b.variant == Variant::BN;
  const std::size_t k1 = b.stride == 2 ? 4 : 3;
  layout.residue.push_back(weighted(conv_kind(b.variant, b.transposed, false), b.c_in, b.c_out, k1, b.stride, 1));
  if (bn) layout.residue.push_back(per_channel(LayerKind::BatchNorm, b.c_out));
  layout.residue.push_back(activation_for(b.variant, b.c_out));
  layout.residue.push_back(weighted(conv_kind(b.variant, b.transposed, b.last), b.c_out, b.c_out, 3, 1, 1));
  if (bn && !b.last) layout.residue.push_back(per_channel(LayerKind::BatchNorm, b.c_out));

  const bool pool = b.stride == 2;
  const bool project = b.c_in != b.c_out;
  const LayerDesc projection = weighted(conv_kind(b.variant, b.transposed, b.last), b.c_in, b.c_out, 1, 1, 0);
  if (b.transposed) {
    if (project) layout.shortcut.push_back(projection);
    if (pool) layout.shortcut.push_back(plain(LayerKind::Upsample2));
  } else {
    if (pool) layout.shortcut.push_back(plain(LayerKind::AvgPool2));
    if (project) layout.shortcut.push_back(projection);
  }

  layout.wn_add = b.variant == Variant::WN;
  if (!b.last) layout.activation = activation_for(b.variant, b.c_out);
  return layout;
}

std::size_t count_weight_layers(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& layer : spec.layers) {
    if (layer.kind == LayerKind::ResBlock) {
      for (const auto& inner : expand_block(*layer.block).residue) n += is_weight_layer(inner.kind) ? 1 : 0;
    } else if (is_weight_layer(layer.kind)) {
      ++n;
    }
  }
  return n;
}

std::vector<ConvRow> conv_table(const NetworkSpec& spec) {
  std::vector<ConvRow> rows;
  for (const auto& layer : spec.layers) {
    if (is_weight_layer(layer.kind)) rows.push_back({layer.kind, layer.kernel, layer.stride, layer.pad, layer.out});
  }
  return rows;
}

nlohmann::ordered_json to_json(const NetworkSpec& spec) {
  nlohmann::ordered_json j;
  j["role"] = to_string(spec.role);
  j["variant"] = to_string(spec.variant);
  j["architecture"] = to_string(spec.architecture);
  j["data_shape"] = spec.data_shape;
  j["base_features"] = spec.base_features;
  j["latent_dim"] = spec.latent_dim;
  j["critic"] = spec.critic;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : spec.layers) {
    nlohmann::ordered_json lj;
    lj["kind"] = to_string(l.kind);
    lj["in"] = l.in;
    lj["out"] = l.out;
    lj["kernel"] = l.kernel;
    lj["stride"] = l.stride;
    lj["pad"] = l.pad;
    lj["height"] = l.height;
    lj["width"] = l.width;
    if (l.block) lj["block"] = block_to_json(*l.block);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network spec must be a JSON object");
  reject_unknown(j, {"role", "variant", "architecture", "data_shape", "base_features", "latent_dim", "critic", "layers"},
                 "network spec");
  NetworkSpec spec;
  spec.role = parse_role(required<std::string>(j, "role"));
  spec.variant = parse_variant(required<std::string>(j, "variant"));
  spec.architecture = parse_architecture(required<std::string>(j, "architecture"));
  spec.data_shape = required<Shape>(j, "data_shape");
  spec.base_features = required<std::size_t>(j, "base_features");
  spec.latent_dim = required<std::size_t>(j, "latent_dim");
  spec.critic = j.value("critic", false);
  if (!j.contains("layers") || !j.at("layers").is_array()) throw ConfigError("network spec: 'layers' must be an array");
  for (const auto& lj : j.at("layers")) {
    reject_unknown(lj, {"kind", "in", "out", "kernel", "stride", "pad", "height", "width", "block"}, "layer");
    LayerDesc l;
    l.kind = parse_layer_kind(required<std::string>(lj, "kind"));
    l.in = lj.value("in", std::size_t{0});
    l.out = lj.value("out", std::size_t{0});
    l.kernel = lj.value("kernel", std::size_t{0});
    l.stride = lj.value("stride", std::size_t{1});
    l.pad = lj.value("pad", std::size_t{0});
    l.height = lj.value("height", std::size_t{0});
    l.width = lj.value("width", std::size_t{0});
    if (lj.contains("block")) {
      const auto& bj = lj.at("block");
      reject_unknown(bj, {"stride", "c_in", "c_out", "variant", "transposed", "last"}, "block");
      ResBlockSpec b;
      b.stride = required<std::size_t>(bj, "stride");
      b.c_in = required<std::size_t>(bj, "c_in");
      b.c_out = required<std::size_t>(bj, "c_out");
      b.variant = parse_variant(required<std::string>(bj, "variant"));
      b.transposed = bj.value("transposed", false);
      b.last = bj.value("last", false);
      l.block = b;
    }
    if (l.kind == LayerKind::ResBlock && !l.block) throw ConfigError("resblock layer without 'block' description");
    spec.layers.push_back(l);
  }
  return spec;
}

std::string to_canonical_string(const NetworkSpec& spec) { return to_json(spec).dump(); }

}  // namespace wngan
