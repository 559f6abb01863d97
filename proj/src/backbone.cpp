#include "gatta/backbone.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "gatta/ops.hpp"

namespace gatta {

void ToyCnnConfig::validate() const {
  if (height == 0 || width == 0 || in_channels == 0)
    throw std::invalid_argument("config: empty input geometry");
  if (height % 8 != 0 || width % 8 != 0)
    throw std::invalid_argument("config: input size must be divisible by 8 (three 2x2 poolings)");
  for (std::size_t c : conv_channels)
    if (c == 0) throw std::invalid_argument("config: conv channels must be positive");
  if (hidden_units == 0 || num_classes < 2)
    throw std::invalid_argument("config: need hidden units and at least two classes");
  if (!(dropout >= real(0) && dropout < real(1)))
    throw std::invalid_argument("config: dropout rate must lie in [0,1)");
}

std::size_t ToyCnnConfig::flat_features() const {
  return (height / 8) * (width / 8) * conv_channels[2];
}

std::vector<std::pair<std::string, Shape>> backbone_layout(const ToyCnnConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t c_in = config.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string prefix = "conv" + std::to_string(i + 1);
    layout.push_back({prefix + ".kernel", {3, 3, c_in, config.conv_channels[i]}});
    layout.push_back({prefix + ".bias", {config.conv_channels[i]}});
    c_in = config.conv_channels[i];
  }
  layout.push_back({"dense1.weight", {config.flat_features(), config.hidden_units}});
  layout.push_back({"dense1.bias", {config.hidden_units}});
  layout.push_back({"dense2.weight", {config.hidden_units, config.num_classes}});
  layout.push_back({"dense2.bias", {config.num_classes}});
  return layout;
}

std::size_t backbone_param_count(const ToyCnnConfig& config) {
  config.validate();
  std::size_t total = 0;
  std::size_t c_in = config.in_channels;
  for (std::size_t c_out : config.conv_channels) {
    total += 3 * 3 * c_in * c_out + c_out;
    c_in = c_out;
  }
  total += config.flat_features() * config.hidden_units + config.hidden_units;
  total += config.hidden_units * config.num_classes + config.num_classes;
  return total;
}

Shape LayerGeometry::gain_shape(std::size_t batch) const {
  return kind == LayerKind::conv ? Shape{batch, height, width} : Shape{batch, channels};
}

std::vector<LayerGeometry> attached_layers(const ToyCnnConfig& config) {
  config.validate();
  std::vector<LayerGeometry> layers;
  std::size_t h = config.height, w = config.width;
  for (std::size_t i = 0; i < 3; ++i) {
    layers.push_back({"c" + std::to_string(i + 1), LayerKind::conv, h, w, config.conv_channels[i]});
    h /= 2;
    w /= 2;
  }
  layers.push_back({"d1", LayerKind::dense, 1, 1, config.hidden_units});
  layers.push_back({"d2", LayerKind::dense, 1, 1, config.num_classes});
  return layers;
}

BackboneModel BackboneModel::build(const ToyCnnConfig& config, std::uint64_t seed) {
  std::vector<NamedTensor> params;
  Rng rng(derive_seed(seed, 0xBAC3B0E));
  for (auto& [name, shape] : backbone_layout(config)) {
    Tensor t(shape);
    if (shape.size() > 1) {
      // Glorot uniform; for conv kernels fans include the 3x3 receptive field.
      const std::size_t receptive = shape.size() == 4 ? shape[0] * shape[1] : 1;
      const double fan_in = static_cast<double>(receptive * shape[shape.size() - 2]);
      const double fan_out = static_cast<double>(receptive * shape.back());
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (real& v : t.data()) v = static_cast<real>(uniform(rng, -limit, limit));
    }
    params.push_back({name, std::move(t)});
  }
  return BackboneModel(config, std::move(params));
}

BackboneModel::BackboneModel(const ToyCnnConfig& config, std::vector<NamedTensor> params)
    : config_(config), params_(std::move(params)) {
  const auto layout = backbone_layout(config_);
  if (layout.size() != params_.size())
    throw std::invalid_argument("backbone: expected " + std::to_string(layout.size()) +
                                " tensors, got " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].name != layout[i].first || params_[i].value.shape() != layout[i].second)
      throw std::invalid_argument("backbone: tensor " + params_[i].name + " " +
                                  shape_str(params_[i].value.shape()) + " does not match " +
                                  layout[i].first + " " + shape_str(layout[i].second));
  }
}

std::size_t BackboneModel::param_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.numel();
  return total;
}

bool operator==(const BackboneModel& a, const BackboneModel& b) {
  if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i)
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value))
      return false;
  return true;
}

BoundBackbone bind(Tape& tape, const BackboneModel& model, bool trainable) {
  BoundBackbone net{&model, {}};
  for (const auto& p : model.parameters())
    net.params.push_back(trainable ? tape.parameter_ref(p.value) : tape.constant_ref(p.value));
  return net;
}

namespace {

Var modulate(Var activation, const LayerGeometry& geo, const LayerGains* gains, std::size_t slot,
             const ForwardOptions& options) {
  if (!gains || !(*gains)[slot]) return activation;
  const Var g = *(*gains)[slot];
  const Shape expected = geo.gain_shape(activation.shape()[0]);
  if (g.shape() != expected)
    throw std::invalid_argument("forward: gain for " + geo.tag + " has shape " +
                                shape_str(g.shape()) + ", expected " + shape_str(expected));
  return scale_add(activation, g, options.clamp_gains);
}

}  // namespace

ForwardResult forward(const BoundBackbone& net, Var images, const LayerGains* gains,
                      const ForwardOptions& options) {
  const ToyCnnConfig& cfg = net.model->config();
  const Shape& in = images.shape();
  if (in.size() != 4 || in[1] != cfg.height || in[2] != cfg.width || in[3] != cfg.in_channels)
    throw std::invalid_argument("forward: images must be [b," + std::to_string(cfg.height) + "," +
                                std::to_string(cfg.width) + "," + std::to_string(cfg.in_channels) +
                                "], got " + shape_str(in));
  const std::vector<LayerGeometry> layers = attached_layers(cfg);
  if (gains && gains->size() != layers.size())
    throw std::invalid_argument("forward: expected " + std::to_string(layers.size()) +
                                " gain slots, got " + std::to_string(gains->size()));
  if (options.training && !options.rng)
    throw std::invalid_argument("forward: training mode needs an rng");

  const std::size_t batch = in[0];
  const auto& p = net.params;
  Rng dummy;
  Rng& rng = options.rng ? *options.rng : dummy;

  ForwardResult result;
  Var x = images;
  for (std::size_t i = 0; i < 3; ++i) {
    x = relu(conv2d(x, p[2 * i], p[2 * i + 1]));
    x = modulate(x, layers[i], gains, i, options);
    result.bundle.push_back({layers[i], x});
    x = dropout(maxpool2x2(x), cfg.dropout, options.training, rng);
  }
  x = reshape(x, {batch, cfg.flat_features()});
  x = relu(dense(x, p[6], p[7]));
  x = modulate(x, layers[3], gains, 3, options);
  result.bundle.push_back({layers[3], x});
  x = dropout(x, cfg.dropout, options.training, rng);
  x = dense(x, p[8], p[9]);
  x = modulate(x, layers[4], gains, 4, options);
  result.bundle.push_back({layers[4], x});
  result.logits = x;
  return result;
}

}  // namespace gatta
