#include <doctest.h>

#include "gatta/backbone.hpp"
#include "gatta/ops.hpp"
#include "support.hpp"

using namespace gatta;
using gatta::test::random_tensor;

TEST_CASE("backbone parameter counts") {
  ToyCnnConfig cfg;
  CHECK(backbone_param_count(cfg) == 620362);
  CHECK(BackboneModel::build(cfg, 0).param_count() == 620362);
  cfg.num_classes = 100;
  CHECK(backbone_param_count(cfg) == 643492);
  CHECK(BackboneModel::build(cfg, 0).param_count() == 643492);
}

TEST_CASE("build is deterministic and Glorot-bounded") {
  const ToyCnnConfig cfg;
  const BackboneModel a = BackboneModel::build(cfg, 42);
  CHECK(a == BackboneModel::build(cfg, 42));
  CHECK_FALSE(a == BackboneModel::build(cfg, 43));
  const auto params = a.parameters();
  REQUIRE(params.size() == 10);
  CHECK(params[0].name == "conv1.kernel");
  CHECK(params[0].value.shape() == Shape{3, 3, 3, 32});
  CHECK(params[9].name == "dense2.bias");
  const double limit = std::sqrt(6.0 / (9 * 3 + 9 * 32));
  for (real v : params[0].value.data()) CHECK(std::abs(v) <= limit);
  CHECK(params[1].value == Tensor({32}, 0));
}

TEST_CASE("config validation") {
  ToyCnnConfig cfg;
  cfg.height = 30;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.dropout = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.num_classes = 1;
  CHECK_THROWS_AS(BackboneModel::build(cfg, 0), std::invalid_argument);
  CHECK_THROWS_AS(BackboneModel(ToyCnnConfig{}, {}), std::invalid_argument);
}

TEST_CASE("forward shape trace") {
  const BackboneModel model = BackboneModel::build(ToyCnnConfig{}, 1);
  Rng rng(2);
  Tape tape;
  const ForwardResult r = forward(bind(tape, model, false), tape.constant(random_tensor({1, 32, 32, 3}, rng, 0, 1)), nullptr);
  CHECK(r.logits.shape() == Shape{1, 10});
  REQUIRE(r.bundle.size() == 5);
  CHECK(r.bundle[0].activation.shape() == Shape{1, 32, 32, 32});
  CHECK(r.bundle[1].activation.shape() == Shape{1, 16, 16, 64});
  CHECK(r.bundle[2].activation.shape() == Shape{1, 8, 8, 128});
  CHECK(r.bundle[3].activation.shape() == Shape{1, 256});
  CHECK(r.bundle[4].activation.shape() == Shape{1, 10});
  CHECK(r.bundle[4].activation.id() == r.logits.id());
  const auto layers = model.layers();
  CHECK(layers[2].tag == "c3");
  CHECK(layers[2].positions() == 64);
  CHECK(layers[3].positions() == 256);
  CHECK(layers[0].gain_shape(2) == Shape{2, 32, 32});
  CHECK(layers[4].gain_shape(2) == Shape{2, 10});
}

TEST_CASE("gains") {
  const BackboneModel model = BackboneModel::build(ToyCnnConfig{}, 3);
  const auto layers = model.layers();
  Rng rng(4);
  const Tensor images = random_tensor({2, 32, 32, 3}, rng, 0, 1);
  Tape tape;
  const BoundBackbone net = bind(tape, model, false);
  const Tensor plain = forward(net, tape.constant_ref(images), nullptr).logits.value();

  SUBCASE("all-zero gains are bitwise the plain pass") {
    LayerGains gains;
    for (const auto& l : layers) gains.push_back(tape.constant(Tensor(l.gain_shape(2), 0)));
    CHECK(forward(net, tape.constant_ref(images), &gains).logits.value() == plain);
    LayerGains none(layers.size());
    CHECK(forward(net, tape.constant_ref(images), &none).logits.value() == plain);
  }
  SUBCASE("gain -1 on c1 silences it") {
    LayerGains gains(layers.size());
    gains[0] = tape.constant(Tensor(layers[0].gain_shape(2), -1));
    const ForwardResult r = forward(net, tape.constant_ref(images), &gains);
    CHECK(r.bundle[0].activation.value() == Tensor({2, 32, 32, 32}, 0));
    BackboneModel zeroed = model;
    zeroed.parameters()[0].value.fill(0);
    zeroed.parameters()[1].value.fill(0);
    CHECK(r.logits.value() == forward(bind(tape, zeroed, false), tape.constant_ref(images), nullptr).logits.value());
  }
  SUBCASE("gain shape mismatch") {
    LayerGains gains(layers.size());
    gains[1] = tape.constant(Tensor({2, 32, 32}, 0));
    CHECK_THROWS_AS(forward(net, tape.constant_ref(images), &gains), std::invalid_argument);
    LayerGains short_list(2);
    CHECK_THROWS_AS(forward(net, tape.constant_ref(images), &short_list), std::invalid_argument);
  }
  SUBCASE("training needs an rng and dropout changes the output") {
    ForwardOptions o;
    o.training = true;
    CHECK_THROWS_AS(forward(net, tape.constant_ref(images), nullptr, o), std::invalid_argument);
    Rng r(5);
    o.rng = &r;
    CHECK_FALSE(forward(net, tape.constant_ref(images), nullptr, o).logits.value() == plain);
  }
}
