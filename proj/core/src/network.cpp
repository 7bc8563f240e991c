#include "wngan/network.hpp"

#include <utility>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

constexpr std::uint64_t kDiscriminatorStream = 0x0D15C;
constexpr std::uint64_t kGeneratorStream = 0x06E4;

ConvGeometry geometry(const LayerDesc& d) { return ConvGeometry::square(d.stride, d.pad); }

void require_fields(const LayerDesc& d) {
  if (d.in == 0 || d.out == 0) throw ConfigError("layer '" + to_string(d.kind) + "' needs positive in/out sizes");
  const bool conv = d.kind != LayerKind::Linear && d.kind != LayerKind::StrictWNLinear &&
                    d.kind != LayerKind::AffineWNLinear && d.kind != LayerKind::WNFullyConnectedToMap;
  if (conv && (d.kernel == 0 || d.stride == 0)) {
    throw ConfigError("layer '" + to_string(d.kind) + "' needs positive kernel and stride");
  }
}

std::size_t bn_calls(const Module& m) {
  if (const auto* bn = dynamic_cast<const BatchNorm*>(&m)) return bn->train_forward_calls;
  if (const auto* seq = dynamic_cast<const Sequential*>(&m)) {
    std::size_t n = 0;
    for (const auto& l : seq->layers) n += bn_calls(*l);
    return n;
  }
  if (const auto* block = dynamic_cast<const ResBlock*>(&m)) {
    return bn_calls(block->residue) + bn_calls(block->shortcut) + (block->activation ? bn_calls(*block->activation) : 0);
  }
  return 0;
}

}  // namespace

ModulePtr make_module(const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::Linear:
      require_fields(d);
      return std::make_unique<Linear>(d.in, d.out);
    case LayerKind::StrictWNLinear:
      require_fields(d);
      return std::make_unique<StrictWNLinear>(d.in, d.out);
    case LayerKind::AffineWNLinear:
      require_fields(d);
      return std::make_unique<AffineWNLinear>(d.in, d.out);
    case LayerKind::Conv:
      require_fields(d);
      return std::make_unique<Conv2d>(d.in, d.out, d.kernel, geometry(d));
    case LayerKind::ConvTranspose:
      require_fields(d);
      return std::make_unique<ConvTranspose2d>(d.in, d.out, d.kernel, geometry(d));
    case LayerKind::StrictWNConv:
    case LayerKind::AffineWNConv:
      require_fields(d);
      return std::make_unique<WNConv2d>(d.in, d.out, d.kernel, geometry(d),
                                        d.kind == LayerKind::AffineWNConv ? WNMode::Affine : WNMode::Strict);
    case LayerKind::StrictWNConvTranspose:
    case LayerKind::AffineWNConvTranspose:
      require_fields(d);
      return std::make_unique<WNConvTranspose2d>(
          d.in, d.out, d.kernel, geometry(d),
          d.kind == LayerKind::AffineWNConvTranspose ? WNMode::Affine : WNMode::Strict);
    case LayerKind::WNFullyConnectedToMap:
      require_fields(d);
      if (d.height == 0 || d.width == 0) throw ConfigError("wn_fc_to_map needs a positive map size");
      return std::make_unique<WNFullyConnectedToMap>(d.in, d.out, d.height, d.width);
    case LayerKind::PReLU:
    case LayerKind::TPReLU:
      if (d.out == 0) throw ConfigError("activation needs a positive channel count");
      return std::make_unique<TPReLU>(d.out, d.kind == LayerKind::TPReLU);
    case LayerKind::BatchNorm:
    case LayerKind::MeanOnlyBatchNorm:
      if (d.out == 0) throw ConfigError("batchnorm needs a positive channel count");
      return std::make_unique<BatchNorm>(d.out, d.kind == LayerKind::MeanOnlyBatchNorm);
    case LayerKind::Sigmoid:
      return std::make_unique<Sigmoid>();
    case LayerKind::AvgPool2:
      return std::make_unique<AvgPool2>();
    case LayerKind::Upsample2:
      return std::make_unique<UpsampleNearest2>();
    case LayerKind::ResBlock: {
      if (!d.block) throw ConfigError("resblock layer without block description");
      const BlockLayout layout = expand_block(*d.block);
      auto block = std::make_unique<ResBlock>();
      for (const auto& l : layout.residue) block->residue.push(make_module(l));
      for (const auto& l : layout.shortcut) block->shortcut.push(make_module(l));
      if (layout.wn_add) block->wn_add = std::make_unique<WNAdd>(d.block->c_out);
      if (layout.activation) block->activation = make_module(*layout.activation);
      return block;
    }
  }
  throw ConfigError("unhandled layer kind");
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.layers.empty()) throw ConfigError("network spec has no layers");
  for (const auto& d : spec_.layers) body_.push(make_module(d));
  has_sigmoid_ = spec_.layers.back().kind == LayerKind::Sigmoid;
  reset(seed);
}

void Network::reset(std::uint64_t seed) {
  CounterRng rng(seed, spec_.role == NetRole::Discriminator ? kDiscriminatorStream : kGeneratorStream);
  body_.reset_parameters(rng);
}

Var Network::forward(const Var& x, Mode mode) {
  if (mode == Mode::Train && x.value().rank() > 0) train_batches_.push_back(x.shape()[0]);
  return body_.forward(x, mode);
}

Var Network::forward_logits(const Var& x, Mode mode) {
  if (!has_sigmoid_) return forward(x, mode);
  if (mode == Mode::Train && x.value().rank() > 0) train_batches_.push_back(x.shape()[0]);
  Var h = x;
  for (std::size_t i = 0; i + 1 < body_.layers.size(); ++i) h = body_.layers[i]->forward(h, mode);
  return h;
}

std::vector<NamedParam> Network::parameters() {
  std::vector<NamedParam> out;
  body_.parameters("", out);
  return out;
}

std::vector<NamedBuffer> Network::buffers() {
  std::vector<NamedBuffer> out;
  body_.buffers("", out);
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.numel();
  return n;
}

void Network::set_trainable(bool on) {
  for (auto& p : parameters()) p.var.set_requires_grad(on);
}

std::size_t Network::bn_train_forward_calls() const { return bn_calls(body_); }

}  // namespace wngan
