#include "gatta/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "gatta/error.hpp"
#include "gatta/ops.hpp"

namespace gatta {

void write_history_csv(const std::filesystem::path& path, const History& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,val_acc\n" << std::setprecision(9);
  auto field = [&](double v) {
    if (!std::isnan(v)) out << v;
  };
  for (const auto& row : history) {
    out << row.epoch << ',';
    field(row.train_loss);
    out << ',';
    field(row.train_acc);
    out << ',';
    field(row.val_acc);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::size_t argmax_row(const real* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    correct += argmax_row(logits.raw() + i * n, n) == static_cast<std::size_t>(labels[i]);
  return correct;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x0DE7, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void check_batch_size(std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
}

// One pass over `train`; `step` builds the loss for a batch and returns
// (loss var, logits var) on the given tape.
template <typename StepFn, typename UpdateFn>
std::pair<double, double> run_epoch(const ImageDataset& train, std::size_t batch_size,
                                    std::uint64_t seed, int epoch, bool do_augment,
                                    const AugmentParams& aug, StepFn&& step, UpdateFn&& update) {
  const auto order = epoch_order(train.size(), seed, epoch);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const std::uint64_t aug_seed = derive_seed(seed, 0xA116, static_cast<std::uint64_t>(epoch));
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    const std::span<const std::size_t> idx(order.data() + start, len);
    Tensor images = gather_images(train, idx);
    const std::vector<int> labels = gather_labels(train, idx);
    if (do_augment) augment(images, aug_seed, start, aug);
    Rng rng(derive_seed(seed, 0xD80, static_cast<std::uint64_t>(epoch) * 1000003u + start));
    Tape tape;
    auto [loss, logits] = step(tape, tape.constant(std::move(images)), labels, rng);
    if (!std::isfinite(loss.value()[0])) throw NumericError("non-finite training loss");
    tape.backward(loss);
    update(tape);
    loss_sum += static_cast<double>(loss.value()[0]) * len;
    correct += count_correct(logits.value(), labels);
  }
  return {loss_sum / train.size(), static_cast<double>(correct) / train.size()};
}

}  // namespace

TrainResult pretrain(BackboneModel& model, const ImageDataset& train, const ImageDataset& val,
                     const PretrainHyper& hyper) {
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("pretrain: empty dataset");
  check_batch_size(hyper.batch_size);
  std::vector<Tensor*> params;
  for (auto& p : model.parameters()) params.push_back(&p.value);
  const std::vector<const Tensor*> cparams(params.begin(), params.end());

  Adam adam(AdamConfig{hyper.learning_rate});
  EarlyStopper stopper(hyper.patience);
  TrainResult result;
  std::vector<Var> bound;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    auto [loss, acc] = run_epoch(
        train, hyper.batch_size, hyper.seed, epoch, hyper.augment, hyper.augment_params,
        [&](Tape& tape, Var images, const std::vector<int>& labels, Rng& rng) {
          BoundBackbone net = bind(tape, model, true);
          bound = net.params;
          ForwardResult out = forward(net, images, nullptr, ForwardOptions{true, &rng, false});
          return std::pair{softmax_cross_entropy(out.logits, labels), out.logits};
        },
        [&](Tape& tape) {
          std::vector<const Tensor*> grads;
          for (const Var& v : bound) grads.push_back(tape.grad(v));
          adam.step(params, grads);
        });
    const double val_acc = evaluate(model, nullptr, val).accuracy;
    EpochRecord row{epoch, loss, acc, val_acc};
    result.history.push_back(row);
    if (hyper.on_epoch) hyper.on_epoch(row);
    if (stopper.update(val_acc, cparams)) break;
  }
  if (stopper.has_snapshot()) stopper.restore(params);
  result.best_epoch = stopper.best_epoch() + 1;
  result.best_val_acc = stopper.best();
  return result;
}

TrainResult train_attention(const BackboneModel& model, AttentionParams& params,
                            const ImageDataset& train, const ImageDataset& val,
                            const AttentionHyper& hyper) {
  if (train.size() == 0 || val.size() == 0)
    throw std::invalid_argument("train_attention: empty dataset");
  check_batch_size(hyper.batch_size);
  if (params.layers().size() != model.layers().size())
    throw std::invalid_argument("train_attention: attention does not match backbone");
  std::vector<Tensor*> tensors = params.tensors();
  const std::vector<const Tensor*> ctensors(tensors.begin(), tensors.end());

  EvalOptions eval_options;
  eval_options.iterations = hyper.iterations;
  Adam adam(AdamConfig{hyper.learning_rate});
  EarlyStopper stopper(hyper.patience);
  TrainResult result;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  EpochRecord initial{0, nan, nan, evaluate(model, &params, val, eval_options).accuracy};
  result.history.push_back(initial);
  if (hyper.on_epoch) hyper.on_epoch(initial);
  stopper.update(initial.val_acc, ctensors);

  std::vector<Var> bound;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    auto [loss, acc] = run_epoch(
        train, hyper.batch_size, hyper.seed, epoch, hyper.augment, hyper.augment_params,
        [&](Tape& tape, Var images, const std::vector<int>& labels, Rng& rng) {
          BoundBackbone net = bind(tape, model, false);
          BoundAttention att = bind(tape, params, true);
          RunOptions run_options;
          run_options.iterations = hyper.iterations;
          run_options.training = true;
          run_options.key_query_dropout = hyper.key_query_dropout;
          run_options.clamp_gains = hyper.clamp_gains;
          run_options.rng = &rng;
          RunResult out = run(net, att, images, run_options);
          std::vector<Var> weights;
          bound.clear();
          for (const auto& layer : att.layers) {
            weights.push_back(layer.key_weight);
            weights.push_back(layer.query_weight);
            bound.insert(bound.end(), {layer.key_weight, layer.key_bias, layer.query_weight,
                                       layer.query_bias, layer.alpha});
          }
          Var loss = softmax_cross_entropy(out.logits, labels);
          if (hyper.l2 > real(0)) loss = add(loss, l2_penalty(weights, hyper.l2));
          return std::pair{loss, out.logits};
        },
        [&](Tape& tape) {
          std::vector<const Tensor*> grads;
          for (const Var& v : bound) grads.push_back(tape.grad(v));
          adam.step(tensors, grads);
        });
    const double val_acc = evaluate(model, &params, val, eval_options).accuracy;
    EpochRecord row{epoch, loss, acc, val_acc};
    result.history.push_back(row);
    if (hyper.on_epoch) hyper.on_epoch(row);
    if (stopper.update(val_acc, ctensors)) break;
  }
  stopper.restore(tensors);
  result.best_epoch = stopper.best_epoch();
  result.best_val_acc = stopper.best();
  return result;
}

Tensor predict_logits(const BackboneModel& model, const AttentionParams* attention,
                      const ImageDataset& data, const EvalOptions& options) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
  check_batch_size(options.batch_size);
  const std::size_t classes = model.config().num_classes;
  Tensor logits({data.size(), classes});
  for (std::size_t start = 0; start < data.size(); start += options.batch_size) {
    const std::size_t len = std::min(options.batch_size, data.size() - start);
    std::vector<std::size_t> idx(len);
    std::iota(idx.begin(), idx.end(), start);
    Tensor images = gather_images(data, idx);
    add_gaussian_noise(images, options.noise_sigma, options.noise_seed, start, options.clip_noise);
    Tape tape;
    const Var x = tape.constant(std::move(images));
    const BoundBackbone net = bind(tape, model, false);
    Var out;
    if (attention) {
      RunOptions run_options;
      run_options.iterations = options.iterations;
      run_options.lesion = options.lesion;
      out = run(net, bind(tape, *attention, false), x, run_options).logits;
    } else {
      out = forward(net, x, nullptr).logits;
    }
    std::copy(out.value().data().begin(), out.value().data().end(), logits.raw() + start * classes);
  }
  return logits;
}

EvalResult score_logits(const Tensor& logits, std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("evaluate: empty split");
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw std::invalid_argument("score_logits: logits do not match labels");
  EvalResult r;
  r.total = labels.size();
  r.class_correct.assign(num_classes, 0);
  r.class_total.assign(num_classes, 0);
  const std::size_t n = logits.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto label = static_cast<std::size_t>(labels[i]);
    const bool hit = argmax_row(logits.raw() + i * n, n) == label;
    r.correct += hit;
    if (label < num_classes) {
      ++r.class_total[label];
      r.class_correct[label] += hit;
    }
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

EvalResult evaluate(const BackboneModel& model, const AttentionParams* attention,
                    const ImageDataset& data, const EvalOptions& options) {
  return score_logits(predict_logits(model, attention, data, options), data.labels, data.num_classes);
}

}  // namespace gatta
