#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gatta/checkpoint.hpp"
#include "gatta/error.hpp"
#include "gatta/optim.hpp"
#include "gatta/trainer.hpp"
#include "grad_suite.hpp"

using namespace gatta;
using namespace gatta::test;

TEST_CASE("adam first step moves by about the learning rate") {
  Tensor p({1}, 0), g({1}, 1);
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  Adam adam;
  adam.step(params, grads);
  CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-4));
  g[0] = -250;
  Tensor q({1}, 0);
  Tensor* qp[] = {&q};
  const Tensor* qg[] = {&g};
  Adam other;
  other.step(qp, qg);
  CHECK(q[0] == doctest::Approx(0.001).epsilon(1e-4));
}

TEST_CASE("adam with zero gradients leaves parameters alone and is deterministic") {
  Rng rng(1);
  Tensor p = random_tensor({8}, rng), zero({8}, 0);
  const Tensor before = p;
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&zero};
  Adam adam;
  for (int i = 0; i < 5; ++i) adam.step(params, grads);
  CHECK(p == before);

  Tensor a = before, b = before, g = random_tensor({8}, rng);
  Tensor* pa[] = {&a};
  Tensor* pb[] = {&b};
  const Tensor* gg[] = {&g};
  Adam x, y;
  for (int i = 0; i < 4; ++i) {
    x.step(pa, gg);
    y.step(pb, gg);
  }
  CHECK(a == b);
}

TEST_CASE("adam rejects non-finite gradients") {
  Tensor p({2}, 0), g({2}, {1, std::numeric_limits<real>::quiet_NaN()});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  Adam adam;
  CHECK_THROWS_AS(adam.step(params, grads), NumericError);
}

TEST_CASE("l2 penalty") {
  Tape tape;
  Var zero = tape.parameter(Tensor({3}, 0));
  const Var zs[] = {zero};
  CHECK(l2_penalty(zs, real(1e-5)).value()[0] == 0);
  Var w = tape.parameter(Tensor({1}, 3));
  const Var ws[] = {w};
  Var loss = l2_penalty(ws, real(1e-5));
  CHECK(loss.value()[0] == doctest::Approx(9e-5).epsilon(1e-6));
  tape.backward(loss);
  CHECK((*tape.grad(w))[0] == doctest::Approx(6e-5).epsilon(1e-6));
}

TEST_CASE("early stopping") {
  Tensor p({1}, 0);
  const Tensor* cp[] = {&p};
  Tensor* mp[] = {&p};
  SUBCASE("patience 0 stops after the first non-improving epoch") {
    EarlyStopper s(0);
    CHECK_FALSE(s.update(0.5, cp));
    CHECK_FALSE(s.update(0.6, cp));
    CHECK(s.update(0.6, cp));
  }
  SUBCASE("best snapshot is restored") {
    EarlyStopper s(2);
    p[0] = 1;
    s.update(0.5, cp);
    p[0] = 2;
    s.update(0.7, cp);
    p[0] = 3;
    CHECK_FALSE(s.update(0.6, cp));
    CHECK_FALSE(s.update(0.7, cp));
    CHECK(s.update(0.1, cp));
    s.restore(mp);
    CHECK(p[0] == 2);
    CHECK(s.best_epoch() == 1);
    CHECK(s.best() == 0.7);
  }
}

TEST_CASE("evaluate on fixed logits") {
  const std::vector<int> labels{0, 1, 2, 1};
  Tensor perfect({4, 3}, 0);
  for (std::size_t i = 0; i < 4; ++i) perfect[i * 3 + labels[i]] = 1;
  const EvalResult r = score_logits(perfect, labels, 3);
  CHECK(r.accuracy == 1.0);
  CHECK(r.class_total[1] == 2);

  // ties go to the first class
  CHECK(score_logits(Tensor({4, 3}, 0), labels, 3).correct == 1);

  Rng rng(3);
  const std::size_t n = 20000;
  std::vector<int> many(n);
  for (std::size_t i = 0; i < n; ++i) many[i] = static_cast<int>(rng() % 10);
  const double acc = score_logits(random_tensor({n, 10}, rng), many, 10).accuracy;
  // 4 standard errors of a binomial(20000, 0.1)
  CHECK(std::abs(acc - 0.1) < 4 * std::sqrt(0.09 / n));
  CHECK_THROWS_AS(score_logits(Tensor({0, 3}), {}, 3), std::invalid_argument);
}

namespace {

struct Tiny {
  ImageDataset train, val;
  BackboneModel model;
};

Tiny tiny_setup() {
  ImageDataset all = synthetic_dataset(120, 4, 5);
  auto [train, val] = split_holdout(all, 0.25, 1);
  return {train, val, BackboneModel::build([] {
            ToyCnnConfig c;
            c.num_classes = 4;
            return c;
          }(), 9)};
}

}  // namespace

TEST_CASE("pretrain: history, determinism and empty input") {
  Tiny a = tiny_setup(), b = tiny_setup();
  PretrainHyper h;
  h.max_epochs = 2;
  h.batch_size = 32;
  h.augment = true;
  const TrainResult ra = pretrain(a.model, a.train, a.val, h);
  const TrainResult rb = pretrain(b.model, b.train, b.val, h);
  CHECK(ra.history.size() == 2);
  CHECK(a.model == b.model);
  CHECK(ra.best_val_acc == rb.best_val_acc);
  CHECK(ra.history[0].epoch == 1);
  ImageDataset empty;
  empty.num_classes = 4;
  CHECK_THROWS_AS(pretrain(a.model, empty, a.val, h), std::invalid_argument);
}

TEST_CASE("train_attention: frozen backbone, epoch-0 baseline, determinism") {
  Tiny t = tiny_setup();
  PretrainHyper ph;
  ph.max_epochs = 1;
  ph.batch_size = 32;
  ph.augment = false;
  pretrain(t.model, t.train, t.val, ph);
  const std::string backbone_bytes = encode_checkpoint(t.model, nullptr);

  AttentionHyper h;
  h.max_epochs = 2;
  h.batch_size = 32;
  h.augment = false;
  AttentionParams p1 = AttentionParams::init(t.model.layers(), 8, 2);
  AttentionParams p2 = p1;
  const TrainResult r1 = train_attention(t.model, p1, t.train, t.val, h);
  const TrainResult r2 = train_attention(t.model, p2, t.train, t.val, h);
  CHECK(p1 == p2);
  REQUIRE(r1.history.size() == 3);
  CHECK(r1.history[0].epoch == 0);
  CHECK(std::isnan(r1.history[0].train_loss));
  CHECK(r1.history[0].val_acc == evaluate(t.model, nullptr, t.val).accuracy);
  CHECK(backbone_payload(encode_checkpoint(t.model, &p1)) == backbone_payload(backbone_bytes));
  CHECK(r1.best_val_acc >= r1.history[0].val_acc);

  AttentionParams mismatch = AttentionParams::init(attached_layers(ToyCnnConfig{}), 8, 2);
  CHECK_THROWS_AS(train_attention(t.model, mismatch, t.train, t.val, h), std::invalid_argument);
}

TEST_CASE("zero-alpha attention evaluates exactly like the baseline") {
  const ImageDataset data = synthetic_dataset(60, 4, 3);
  ToyCnnConfig cfg;
  cfg.num_classes = 4;
  const BackboneModel model = BackboneModel::build(cfg, 4);
  const AttentionParams p = AttentionParams::init(model.layers(), 16, 5);
  EvalOptions o;
  o.batch_size = 25;
  CHECK(predict_logits(model, &p, data, o) == predict_logits(model, nullptr, data, o));
  o.noise_sigma = 0.1;
  CHECK(predict_logits(model, &p, data, o) == predict_logits(model, nullptr, data, o));
  const EvalResult r = evaluate(model, &p, data, o);
  CHECK(r.total == 60);
}

TEST_CASE("history CSV") {
  const auto path = std::filesystem::temp_directory_path() / "gatta_history_test.csv";
  History h{{0, std::nan(""), std::nan(""), 0.5}, {1, 0.25, 0.75, 0.625}};
  write_history_csv(path, h);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "epoch,train_loss,train_acc,val_acc\n0,,,0.5\n1,0.25,0.75,0.625\n");
  std::filesystem::remove(path);
}
