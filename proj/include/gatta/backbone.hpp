#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gatta/rng.hpp"
#include "gatta/tape.hpp"

namespace gatta {

/// The 3-conv + 2-dense toy CNN: 3x3 convs (same padding) with ReLU and 2x2
/// max pooling, a 256-unit ReLU dense layer and a linear classifier.
struct ToyCnnConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t in_channels = 3;
  std::array<std::size_t, 3> conv_channels{32, 64, 128};
  std::size_t hidden_units = 256;
  std::size_t num_classes = 10;
  real dropout = real(0.2);

  void validate() const;
  std::size_t flat_features() const;

  friend bool operator==(const ToyCnnConfig&, const ToyCnnConfig&) = default;
};

/// Closed-form weight + bias count: sum over convs of 9*c_in*c_out + c_out,
/// plus in*out + out for each dense layer.
std::size_t backbone_param_count(const ToyCnnConfig& config);

enum class LayerKind { conv, dense };

/// A layer wired to the attention system. Conv layers expose height*width
/// positions of `channels` features; dense layers expose `channels` units.
struct LayerGeometry {
  std::string tag;
  LayerKind kind = LayerKind::conv;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 0;

  std::size_t positions() const { return kind == LayerKind::conv ? height * width : channels; }
  /// Shape of a per-position gain for `batch` items: [b,h,w] or [b,c].
  Shape gain_shape(std::size_t batch) const;

  friend bool operator==(const LayerGeometry&, const LayerGeometry&) = default;
};

/// Attached layers in forward order: c1, c2, c3, d1, d2.
std::vector<LayerGeometry> attached_layers(const ToyCnnConfig& config);

struct NamedTensor {
  std::string name;
  Tensor value;
};

class BackboneModel {
 public:
  /// Glorot-uniform weights, zero biases, reproducible from `seed`.
  static BackboneModel build(const ToyCnnConfig& config, std::uint64_t seed);

  /// Adopts existing weights; names and shapes must match the architecture.
  BackboneModel(const ToyCnnConfig& config, std::vector<NamedTensor> params);

  const ToyCnnConfig& config() const { return config_; }
  std::size_t param_count() const;
  std::vector<LayerGeometry> layers() const { return attached_layers(config_); }

  std::span<NamedTensor> parameters() { return params_; }
  std::span<const NamedTensor> parameters() const { return params_; }

  friend bool operator==(const BackboneModel&, const BackboneModel&);

 private:
  ToyCnnConfig config_;
  std::vector<NamedTensor> params_;
};

/// Parameter names and shapes for `config`, in storage order.
std::vector<std::pair<std::string, Shape>> backbone_layout(const ToyCnnConfig& config);

/// Model weights placed on a tape, either as gradient leaves or constants.
struct BoundBackbone {
  const BackboneModel* model = nullptr;
  std::vector<Var> params;
};

BoundBackbone bind(Tape& tape, const BackboneModel& model, bool trainable);

struct ActivationRecord {
  LayerGeometry geometry;
  Var activation;  ///< conv: [b,h,w,c] post-ReLU pre-pool; d1: [b,256] post-ReLU; d2: logits
};

using ActivationBundle = std::vector<ActivationRecord>;

/// Optional multiplicative gain per attached layer. A present gain g turns the
/// layer's activation a into a * (1 + g) at the tap point.
using LayerGains = std::vector<std::optional<Var>>;

struct ForwardOptions {
  bool training = false;  ///< enables backbone dropout; requires `rng`
  Rng* rng = nullptr;
  bool clamp_gains = false;
};

struct ForwardResult {
  Var logits;
  ActivationBundle bundle;
};

/// images: [b,h,w,c] in [0,1]. `gains`, when given, has one slot per attached layer.
ForwardResult forward(const BoundBackbone& net, Var images, const LayerGains* gains,
                      const ForwardOptions& options = {});

}  // namespace gatta
