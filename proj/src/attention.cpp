#include "gatta/attention.hpp"

#include <cmath>

#include "gatta/error.hpp"
#include "gatta/ops.hpp"

namespace gatta {

std::size_t attention_param_count(std::size_t dim, std::span<const LayerGeometry> layers) {
  std::size_t total = 0;
  for (const auto& layer : layers) total += 2 * (layer.channels * dim + dim) + 1;
  return total;
}

AttentionParams AttentionParams::init(std::span<const LayerGeometry> layers, std::size_t dim,
                                      std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("attention: dimension must be positive");
  std::vector<LayerProjection> projections;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t c = layers[i].channels;
    const double limit = std::sqrt(6.0 / static_cast<double>(c + dim));
    Rng rng(derive_seed(seed, 0xA77E, i));
    auto uniform_matrix = [&] {
      Tensor t({c, dim});
      for (real& v : t.data()) v = static_cast<real>(uniform(rng, -limit, limit));
      return t;
    };
    LayerProjection p;
    p.key_weight = uniform_matrix();
    p.query_weight = uniform_matrix();
    p.key_bias = Tensor({dim});
    p.query_bias = Tensor({dim});
    p.alpha = Tensor({1});
    projections.push_back(std::move(p));
  }
  return AttentionParams({layers.begin(), layers.end()}, dim, std::move(projections));
}

AttentionParams::AttentionParams(std::vector<LayerGeometry> layers, std::size_t dim,
                                 std::vector<LayerProjection> projections)
    : layers_(std::move(layers)), dim_(dim), projections_(std::move(projections)) {
  if (layers_.empty()) throw std::invalid_argument("attention: no attached layers");
  if (projections_.size() != layers_.size())
    throw std::invalid_argument("attention: projection count does not match layer count");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape w{layers_[i].channels, dim_};
    const auto& p = projections_[i];
    if (p.key_weight.shape() != w || p.query_weight.shape() != w ||
        p.key_bias.shape() != Shape{dim_} || p.query_bias.shape() != Shape{dim_} ||
        p.alpha.shape() != Shape{1})
      throw std::invalid_argument("attention: projection shapes for " + layers_[i].tag +
                                  " do not match [c=" + std::to_string(layers_[i].channels) +
                                  ", d=" + std::to_string(dim_) + "]");
  }
}

std::size_t AttentionParams::param_count() const {
  std::size_t total = 0;
  for (const Tensor* t : tensors()) total += t->numel();
  return total;
}

std::vector<Tensor*> AttentionParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& p : projections_)
    out.insert(out.end(), {&p.key_weight, &p.key_bias, &p.query_weight, &p.query_bias, &p.alpha});
  return out;
}

std::vector<const Tensor*> AttentionParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& p : projections_)
    out.insert(out.end(), {&p.key_weight, &p.key_bias, &p.query_weight, &p.query_bias, &p.alpha});
  return out;
}

std::vector<std::string> AttentionParams::tensor_names() const {
  std::vector<std::string> names;
  for (const auto& layer : layers_)
    for (const char* field : {"key_weight", "key_bias", "query_weight", "query_bias", "alpha"})
      names.push_back("attn." + layer.tag + "." + field);
  return names;
}

bool operator==(const AttentionParams& a, const AttentionParams& b) {
  if (a.dim_ != b.dim_ || a.layers_ != b.layers_) return false;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!(*ta[i] == *tb[i])) return false;
  return true;
}

namespace {

char layer_letter(const LayerGeometry& layer) { return layer.kind == LayerKind::conv ? 'c' : 'd'; }

}  // namespace

LesionMask LesionMask::parse(std::string_view text, std::span<const LayerGeometry> layers) {
  if (text.size() != layers.size())
    throw UsageError("lesion mask '" + std::string(text) + "' must have " +
                     std::to_string(layers.size()) + " characters");
  LesionMask mask;
  mask.text_ = std::string(text);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (text[i] == '.') {
      mask.modulated_.push_back(false);
    } else if (text[i] == layer_letter(layers[i])) {
      mask.modulated_.push_back(true);
    } else {
      throw UsageError("lesion mask '" + std::string(text) + "': position " + std::to_string(i + 1) +
                       " must be '.' or '" + layer_letter(layers[i]) + "'");
    }
  }
  return mask;
}

LesionMask LesionMask::full(std::span<const LayerGeometry> layers) {
  std::string text;
  for (const auto& layer : layers) text += layer_letter(layer);
  return parse(text, layers);
}

std::vector<LesionMask> LesionMask::enumerate(std::span<const LayerGeometry> layers) {
  const std::size_t n = layers.size();
  std::vector<LesionMask> masks;
  for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
    std::string text;
    for (std::size_t i = 0; i < n; ++i)
      text += (bits >> (n - 1 - i)) & 1 ? layer_letter(layers[i]) : '.';
    masks.push_back(parse(text, layers));
  }
  return masks;
}

BoundAttention bind(Tape& tape, const AttentionParams& params, bool trainable) {
  BoundAttention bound{&params, {}};
  auto leaf = [&](const Tensor& t) { return trainable ? tape.parameter_ref(t) : tape.constant_ref(t); };
  for (const auto& p : params.projections())
    bound.layers.push_back({leaf(p.key_weight), leaf(p.key_bias), leaf(p.query_weight),
                            leaf(p.query_bias), leaf(p.alpha)});
  return bound;
}

KeysQueries project(const ActivationBundle& bundle, const BoundAttention& attention,
                    bool training, real dropout_rate, Rng* rng) {
  const AttentionParams& params = *attention.params;
  if (bundle.size() != params.layers().size())
    throw std::invalid_argument("project: bundle has " + std::to_string(bundle.size()) +
                                " layers, attention expects " +
                                std::to_string(params.layers().size()));
  if (training && dropout_rate > real(0) && !rng)
    throw std::invalid_argument("project: training dropout needs an rng");
  Rng dummy;
  Rng& r = rng ? *rng : dummy;
  const std::size_t d = params.dim();

  KeysQueries out;
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const LayerGeometry& geo = bundle[i].geometry;
    if (geo.channels != params.layers()[i].channels || geo.kind != params.layers()[i].kind)
      throw std::invalid_argument("project: layer " + geo.tag + " geometry does not match projection");
    const ProjectionVars& pv = attention.layers[i];
    const Var a = bundle[i].activation;
    const std::size_t b = a.shape()[0];
    Var k, q;
    if (geo.kind == LayerKind::conv) {
      const Var rows = reshape(a, {b * geo.height * geo.width, geo.channels});
      k = reshape(dense(rows, pv.key_weight, pv.key_bias), {b, geo.positions(), d});
      q = reshape(dense(rows, pv.query_weight, pv.query_bias), {b, geo.positions(), d});
    } else {
      k = row_outer(a, pv.key_weight, pv.key_bias);
      q = row_outer(a, pv.query_weight, pv.query_bias);
    }
    out.keys.push_back(dropout(k, dropout_rate, training, r));
    out.queries.push_back(dropout(q, dropout_rate, training, r));
  }
  return out;
}

Var pool_global_query(std::span<const Var> queries) {
  if (queries.empty()) throw std::invalid_argument("pool_global_query: no attached layers");
  Var total = mean_axis1(queries[0]);
  for (std::size_t i = 1; i < queries.size(); ++i) total = add(total, mean_axis1(queries[i]));
  return scale(total, real(1) / static_cast<real>(queries.size()));
}

std::vector<Var> agreement(std::span<const Var> keys, Var global_query) {
  std::vector<Var> out;
  for (const Var& k : keys) out.push_back(batched_dot(k, global_query));
  return out;
}

RunResult run(const BoundBackbone& net, const BoundAttention& attention, Var images,
              const RunOptions& options) {
  if (options.iterations < 1) throw UsageError("run: iterations must be >= 1");
  const std::vector<LayerGeometry> layers = net.model->layers();
  const LesionMask lesion = options.lesion.empty() ? LesionMask::full(layers) : options.lesion;
  if (lesion.size() != layers.size()) throw UsageError("run: lesion mask length mismatch");

  const ForwardOptions fwd{options.training && options.backbone_dropout, options.rng,
                           options.clamp_gains};
  RunResult result;
  ForwardResult pass = forward(net, images, nullptr, fwd);
  for (int t = 0; t < options.iterations; ++t) {
    GattaState state;
    state.projections = project(pass.bundle, attention, options.training,
                                options.key_query_dropout, options.rng);
    state.global_query = pool_global_query(state.projections.queries);
    state.agreement = agreement(state.projections.keys, state.global_query);

    const std::size_t batch = images.shape()[0];
    LayerGains gains(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!lesion.modulated(i)) continue;
      const Var score = reshape(state.agreement[i], layers[i].gain_shape(batch));
      gains[i] = mul_scalar(score, attention.layers[i].alpha);
    }
    result.history.push_back(std::move(state));
    pass = forward(net, images, &gains, fwd);
  }
  result.logits = pass.logits;
  result.final_bundle = std::move(pass.bundle);
  return result;
}

}  // namespace gatta
