#pragma once

// Global attention agreement: every attached layer projects its activations
// into d-dimensional keys and queries; all queries are pooled into a single
// global query; each location's key is scored against it, and the score
// rescales that location on the next forward pass.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gatta/backbone.hpp"

namespace gatta {

/// Key/query projection of one attached layer plus its modulation strength.
struct LayerProjection {
  Tensor key_weight;    ///< [c, d]
  Tensor key_bias;      ///< [d]
  Tensor query_weight;  ///< [c, d]
  Tensor query_bias;    ///< [d]
  Tensor alpha;         ///< [1]
};

/// sum over layers of 2 * (c * d + d), plus one alpha per layer.
std::size_t attention_param_count(std::size_t dim, std::span<const LayerGeometry> layers);

class AttentionParams {
 public:
  /// Uniform(+-sqrt(6 / (c + d))) projections, zero biases, zero alphas.
  static AttentionParams init(std::span<const LayerGeometry> layers, std::size_t dim,
                              std::uint64_t seed);

  AttentionParams(std::vector<LayerGeometry> layers, std::size_t dim,
                  std::vector<LayerProjection> projections);

  std::size_t dim() const { return dim_; }
  std::span<const LayerGeometry> layers() const { return layers_; }
  std::span<LayerProjection> projections() { return projections_; }
  std::span<const LayerProjection> projections() const { return projections_; }
  std::size_t param_count() const;

  /// Flat view of every trainable tensor, five per layer in LayerProjection order.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  /// Names matching tensors(), e.g. "attn.c1.key_weight".
  std::vector<std::string> tensor_names() const;

  friend bool operator==(const AttentionParams&, const AttentionParams&);

 private:
  std::vector<LayerGeometry> layers_;
  std::size_t dim_ = 0;
  std::vector<LayerProjection> projections_;
};

/// Which attached layers receive modulation. Written as one character per
/// layer: its kind letter ('c' or 'd') when modulated, '.' when lesioned.
/// Lesioned layers still contribute keys and queries to the global query.
class LesionMask {
 public:
  LesionMask() = default;
  /// Throws UsageError on a wrong length or a character other than '.' or the layer's letter.
  static LesionMask parse(std::string_view text, std::span<const LayerGeometry> layers);
  static LesionMask full(std::span<const LayerGeometry> layers);
  /// All 2^n masks, from "....." (index 0) upward in binary order, c1 as the high bit.
  static std::vector<LesionMask> enumerate(std::span<const LayerGeometry> layers);

  bool modulated(std::size_t layer) const { return modulated_.at(layer); }
  std::size_t size() const { return modulated_.size(); }
  bool empty() const { return modulated_.empty(); }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
  std::vector<bool> modulated_;
};

struct ProjectionVars {
  Var key_weight, key_bias, query_weight, query_bias, alpha;
};

struct BoundAttention {
  const AttentionParams* params = nullptr;
  std::vector<ProjectionVars> layers;
};

BoundAttention bind(Tape& tape, const AttentionParams& params, bool trainable);

/// Per layer keys and queries, each [b, positions, d].
struct KeysQueries {
  std::vector<Var> keys;
  std::vector<Var> queries;
};

/// Conv layers: k(x,y,m) = sum_c a(x,y,c) K(c,m) + bk(m). Dense layers:
/// k(c,m) = a(c) K(c,m) + bk(m). Same for queries. In training mode, dropout
/// at `dropout_rate` is applied to keys and queries.
KeysQueries project(const ActivationBundle& bundle, const BoundAttention& attention,
                    bool training, real dropout_rate, Rng* rng);

/// Two-stage mean: within each layer over its positions, then over layers. [b, d]
Var pool_global_query(std::span<const Var> queries);

/// Agreement score per location: key . global query, no scaling. Each [b, positions].
std::vector<Var> agreement(std::span<const Var> keys, Var global_query);

struct GattaState {
  KeysQueries projections;
  Var global_query;            ///< [b, d]
  std::vector<Var> agreement;  ///< per layer [b, positions]
};

struct RunOptions {
  int iterations = 1;
  LesionMask lesion;  ///< empty means every layer is modulated
  bool training = false;
  real key_query_dropout = real(0.25);
  bool backbone_dropout = false;
  bool clamp_gains = false;
  Rng* rng = nullptr;
};

struct RunResult {
  Var logits;
  /// history[t] is the state computed on pass t that modulates pass t + 1.
  std::vector<GattaState> history;
  ActivationBundle final_bundle;
};

/// Pass 0 is the plain backbone. Each later pass applies gains
/// alpha_i * agreement_i from the previous pass at non-lesioned layers.
RunResult run(const BoundBackbone& net, const BoundAttention& attention, Var images,
              const RunOptions& options);

}  // namespace gatta
