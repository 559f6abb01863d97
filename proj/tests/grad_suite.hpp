#pragma once

// Randomized finite-difference cases shared by the unit tests and the
// acceptance binary. Each case owns its tensors; the loss projects the op
// output onto fixed random weights so every output element matters.

#include <memory>
#include <string>
#include <vector>

#include "gatta/attention.hpp"
#include "gatta/grad_check.hpp"
#include "gatta/ops.hpp"
#include "support.hpp"

namespace gatta::test {

struct GradCase {
  std::string name;
  std::vector<Tensor> tensors;
  ScalarFn fn;
  GradCheckOptions options;
  // backbone/attention objects referenced by `fn`
  std::shared_ptr<void> keep_alive;

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (Tensor& t : tensors) out.push_back(&t);
    return out;
  }
};

#ifdef GATTA_DOUBLE
inline constexpr double kGradEps = 1e-5;
inline constexpr double kGradFloor = 1e-5;
inline constexpr double kPolyEps = 1e-5;
inline constexpr double kNetEps = 1e-5;
inline constexpr int kNetRefinements = 2;
#else
inline constexpr double kGradEps = 1e-2;
inline constexpr double kGradFloor = 1e-5;
// Losses at most quadratic in any single element: central differences are
// exact there, so a wide step only buys headroom over float rounding.
inline constexpr double kPolyEps = 0.25;
// Whole-network float losses carry ~1e-6 rounding, so start wide and let the
// refinements back off when a wide step crosses a relu or max kink.
inline constexpr double kNetEps = 5e-2;
inline constexpr int kNetRefinements = 2;
#endif

inline Var project_onto(Var y, const Tensor& weights) {
  Tape& tape = y.tape();
  return sum(mul(y, tape.constant_ref(weights)));
}

// Distinct values spaced well beyond the probe step so window maxima never swap.
inline Tensor spaced_values(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.numel());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); ++i)
    t[order[i]] = static_cast<real>(-1.0 + 0.05 * static_cast<double>(i));
  return t;
}

inline std::vector<GradCase> op_grad_cases(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6AD));
  std::vector<GradCase> cases;
  GradCheckOptions opt;
  opt.eps = kGradEps;
  opt.floor = kGradFloor;
  opt.seed = seed;

  auto unary = [&](std::string name, Tensor x, auto op) {
    auto w = std::make_shared<Tensor>();
    GradCase c{std::move(name), {std::move(x)}, nullptr, opt, w};
    c.fn = [w, op](Tape&, std::span<const Var> p) {
      Var y = op(p[0]);
      if (w->empty()) {
        Rng r(y.numel());
        *w = random_tensor(y.shape(), r);
      }
      return project_onto(y, *w);
    };
    cases.push_back(std::move(c));
  };
  auto binary = [&](std::string name, Tensor a, Tensor b, auto op) {
    auto w = std::make_shared<Tensor>();
    GradCase c{std::move(name), {std::move(a), std::move(b)}, nullptr, opt, w};
    c.fn = [w, op](Tape&, std::span<const Var> p) {
      Var y = op(p[0], p[1]);
      if (w->empty()) {
        Rng r(y.numel() + 1);
        *w = random_tensor(y.shape(), r);
      }
      return project_onto(y, *w);
    };
    cases.push_back(std::move(c));
  };
  auto ternary = [&](std::string name, Tensor a, Tensor b, Tensor c3, auto op) {
    auto w = std::make_shared<Tensor>();
    GradCase c{std::move(name), {std::move(a), std::move(b), std::move(c3)}, nullptr, opt, w};
    c.fn = [w, op](Tape&, std::span<const Var> p) {
      Var y = op(p[0], p[1], p[2]);
      if (w->empty()) {
        Rng r(y.numel() + 2);
        *w = random_tensor(y.shape(), r);
      }
      return project_onto(y, *w);
    };
    cases.push_back(std::move(c));
  };

  binary("add", random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), [](Var a, Var b) { return add(a, b); });
  binary("sub", random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), [](Var a, Var b) { return sub(a, b); });
  binary("mul", random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), [](Var a, Var b) { return mul(a, b); });
  unary("scale", random_tensor({5}, rng), [](Var a) { return scale(a, real(-1.5)); });
  unary("add_scalar", random_tensor({5}, rng), [](Var a) { return add_scalar(a, real(0.3)); });
  unary("sum", random_tensor({2, 3}, rng), [](Var a) { return mul(sum(a), sum(a)); });
  unary("mean", random_tensor({2, 3}, rng), [](Var a) { return mul(mean(a), mean(a)); });
  unary("sum_squares", random_tensor({2, 3}, rng), [](Var a) { return sum_squares(a); });
  unary("reshape", random_tensor({2, 6}, rng), [](Var a) { return reshape(a, {3, 4}); });
  unary("relu", away_from_zero({4, 5}, rng, 0.05), [](Var a) { return relu(a); });
  binary("matmul", random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), [](Var a, Var b) { return matmul(a, b); });
  binary("add_bias", random_tensor({2, 3, 4}, rng), random_tensor({4}, rng),
         [](Var a, Var b) { return add_bias(a, b); });
  ternary("dense", random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng),
          [](Var x, Var w, Var b) { return dense(x, w, b); });
  ternary("conv2d", random_tensor({2, 4, 5, 3}, rng), random_tensor({3, 3, 3, 2}, rng), random_tensor({2}, rng),
          [](Var x, Var w, Var b) { return conv2d(x, w, b); });
  unary("maxpool2x2", spaced_values({2, 4, 4, 2}, rng), [](Var a) { return maxpool2x2(a); });
  unary("dropout", random_tensor({6, 5}, rng), [](Var a) {
    Rng r(77);
    return dropout(a, real(0.4), true, r);
  });
  binary("scale_add", random_tensor({2, 3, 3, 4}, rng), random_tensor({2, 3, 3}, rng),
         [](Var x, Var g) { return scale_add(x, g); });
  binary("scale_add_clamped", random_tensor({2, 5}, rng), away_from_zero({2, 5}, rng, 0.1),
         [](Var x, Var g) { return scale_add(x, add_scalar(g, real(-1)), true); });
  binary("mul_scalar", random_tensor({2, 4}, rng), random_tensor({1}, rng),
         [](Var x, Var s) { return mul_scalar(x, s); });
  ternary("row_outer", random_tensor({2, 3}, rng), random_tensor({3, 4}, rng), random_tensor({4}, rng),
          [](Var a, Var w, Var b) { return row_outer(a, w, b); });
  unary("mean_axis1", random_tensor({2, 5, 3}, rng), [](Var a) { return mean_axis1(a); });
  binary("batched_dot", random_tensor({2, 5, 3}, rng), random_tensor({2, 3}, rng),
         [](Var k, Var q) { return batched_dot(k, q); });
  {
    const std::vector<int> labels{2, 0, 1};
    GradCase c{"softmax_cross_entropy", {random_tensor({3, 4}, rng, -2, 2)}, nullptr, opt, nullptr};
    c.fn = [labels](Tape&, std::span<const Var> p) { return softmax_cross_entropy(p[0], labels); };
    cases.push_back(std::move(c));
  }
  for (GradCase& c : cases)
    if (c.name != "relu" && c.name != "maxpool2x2" && c.name != "scale_add_clamped" &&
        c.name != "softmax_cross_entropy")
      c.options.eps = kPolyEps;
  return cases;
}

// Small network with the toy topology; the full-size one is exercised separately.
inline constexpr real kTinyBackboneScale = 1.5f;
inline ToyCnnConfig tiny_config() {
  ToyCnnConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.conv_channels = {3, 4, 5};
  cfg.hidden_units = 6;
  cfg.num_classes = 3;
  return cfg;
}

struct AttentionFixture {
  BackboneModel model;
  AttentionParams attention;
  Tensor images;
  std::vector<int> labels;
};

// Loss of the attention-augmented network with respect to every K, Q, bias and
// alpha, backbone frozen. Alphas start away from zero so keys and queries get gradient.
// `backbone_scale` multiplies every frozen weight: a fresh tiny backbone barely
// reacts to its gains, leaving gradients too small for a 32-bit loss to resolve.
inline GradCase attention_grad_case(std::uint64_t seed, const ToyCnnConfig& cfg, std::size_t dim,
                                    std::size_t batch, std::size_t max_elements, real backbone_scale = 1) {
  auto fx = std::make_shared<AttentionFixture>(AttentionFixture{
      BackboneModel::build(cfg, seed), AttentionParams::init(attached_layers(cfg), dim, seed + 1), {}, {}});
  for (auto& p : fx->model.parameters())
    for (real& v : p.value.data()) v *= backbone_scale;
  Rng rng(derive_seed(seed, 0xA77));
  fx->images = random_tensor({batch, cfg.height, cfg.width, cfg.in_channels}, rng, 0, 1);
  for (std::size_t i = 0; i < batch; ++i) fx->labels.push_back(static_cast<int>(i % cfg.num_classes));
  for (auto& p : fx->attention.projections()) {
    p.alpha[0] = static_cast<real>(uniform(rng, 0.2, 0.6));
    for (real& v : p.key_bias.data()) v = static_cast<real>(uniform(rng, -0.1, 0.1));
    for (real& v : p.query_bias.data()) v = static_cast<real>(uniform(rng, -0.1, 0.1));
  }

  GradCase c;
  c.name = "attention_path";
  c.options.eps = kNetEps;
  c.options.refinements = kNetRefinements;
  c.options.floor = kGradFloor;
  c.options.seed = seed;
  c.options.max_elements = max_elements;
  for (const Tensor* t : fx->attention.tensors()) c.tensors.push_back(*t);
  c.fn = [fx](Tape& tape, std::span<const Var> p) {
    const BoundBackbone net = bind(tape, fx->model, false);
    BoundAttention att{&fx->attention, {}};
    for (std::size_t i = 0; i + 4 < p.size(); i += 5) att.layers.push_back({p[i], p[i + 1], p[i + 2], p[i + 3], p[i + 4]});
    const RunResult r = run(net, att, tape.constant_ref(fx->images), {});
    return softmax_cross_entropy(r.logits, fx->labels);
  };
  c.keep_alive = fx;
  return c;
}

// Backbone loss with respect to one conv kernel slice and the classifier.
inline GradCase backbone_grad_case(std::uint64_t seed, const ToyCnnConfig& cfg, std::size_t batch,
                                   std::size_t max_elements) {
  auto fx = std::make_shared<AttentionFixture>(AttentionFixture{
      BackboneModel::build(cfg, seed), AttentionParams::init(attached_layers(cfg), 4, seed), {}, {}});
  Rng rng(derive_seed(seed, 0xBB));
  fx->images = random_tensor({batch, cfg.height, cfg.width, cfg.in_channels}, rng, 0, 1);
  for (std::size_t i = 0; i < batch; ++i) fx->labels.push_back(static_cast<int>(i % cfg.num_classes));

  GradCase c;
  c.name = "backbone_loss";
  c.options.eps = kNetEps;
  c.options.refinements = kNetRefinements;
  c.options.floor = kGradFloor;
  c.options.seed = seed;
  c.options.max_elements = max_elements;
  const auto params = fx->model.parameters();
  for (const auto& p : params) c.tensors.push_back(p.value);
  c.fn = [fx](Tape& tape, std::span<const Var> p) {
    BoundBackbone net{&fx->model, {p.begin(), p.end()}};
    return softmax_cross_entropy(forward(net, tape.constant_ref(fx->images), nullptr).logits, fx->labels);
  };
  c.keep_alive = fx;
  return c;
}

}  // namespace gatta::test
