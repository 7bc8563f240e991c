#pragma once

#include <cstdint>
#include <vector>

#include "wngan/layers.hpp"
#include "wngan/netbuild.hpp"

namespace wngan {

/// Builds the module for one layer description (blocks included).
ModulePtr make_module(const LayerDesc& desc);

/// A network instantiated from a NetworkSpec. Parameters are drawn from a
/// counter-based stream keyed by (seed, role), so a spec and a seed fully
/// determine the initial weights.
class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  /// x is a batch: [N, ...input_shape].
  Var forward(const Var& x, Mode mode);
  /// Like forward, but stops before a trailing sigmoid if there is one.
  Var forward_logits(const Var& x, Mode mode);
  bool has_output_sigmoid() const { return has_sigmoid_; }

  /// Parameters in spec traversal order, names like "3.kernel".
  std::vector<NamedParam> parameters();
  std::vector<NamedBuffer> buffers();
  std::size_t parameter_count();

  void reset(std::uint64_t seed);
  void set_trainable(bool on);

  /// Sum of train-mode forward calls over every batch-norm layer.
  std::size_t bn_train_forward_calls() const;
  /// Batch size of each train-mode forward pass since the last clear.
  const std::vector<std::size_t>& train_forward_batches() const { return train_batches_; }
  void clear_forward_log() { train_batches_.clear(); }

  Sequential& body() { return body_; }

 private:
  NetworkSpec spec_;
  Sequential body_;
  bool has_sigmoid_ = false;
  std::vector<std::size_t> train_batches_;
};

}  // namespace wngan
