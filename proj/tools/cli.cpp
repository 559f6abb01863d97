#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gatta/checkpoint.hpp"
#include "gatta/error.hpp"
#include "gatta/trainer.hpp"

namespace gatta::cli {
namespace fs = std::filesystem;

std::vector<double> default_noise_grid() { return {0, 0.001, 0.003, 0.01, 0.03, 0.04, 0.1, 0.25}; }

std::vector<std::string> named_lesion_masks() {
  return {".....", "cccdd", ".ccdd", "c.cdd", "cc.dd", "ccc.d", "cccd.",
          "c....", ".c...", "..c..", "...d.", "....d"};
}

namespace {

// Every knob of the toy-model protocol. Defaults reproduce the published recipe.
struct ExperimentConfig {
  std::string command;

  std::string dataset = "cifar10";
  std::string data_path;
  std::size_t subset = 5000;
  bool long_mode = false;
  std::size_t synthetic_n = 5000;
  std::size_t synthetic_test_n = 1000;
  std::size_t synthetic_classes = 4;
  std::uint64_t data_seed = 0;
  double val_fraction = 0.1;
  std::string split = "test";

  std::uint64_t seed = 0;
  std::size_t attention_dim = 16;
  int iterations = 1;
  std::string lesion;
  std::string sigmas;
  std::uint64_t noise_seed = 0;
  bool clip_noise = false;

  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  int max_epochs = 0;
  int patience = -1;
  double backbone_dropout = 0.2;
  double key_query_dropout = 0.25;
  double l2 = 1e-5;
  std::optional<bool> augment;
  bool clamp_gains = false;

  std::string backbone_path;
  std::string checkpoint_path;
  std::string out_path;
  std::string history_path;
  std::string out_dir = ".";
  std::size_t export_count = 8;
  bool quiet = false;
};

struct ExperimentData {
  ImageDataset train;
  ImageDataset val;
  ImageDataset test;
};

bool is_synthetic(const ExperimentConfig& c) { return c.dataset == "synthetic"; }

std::size_t dataset_classes(const ExperimentConfig& c) {
  if (c.dataset == "cifar10") return 10;
  if (c.dataset == "cifar100") return 100;
  if (c.dataset == "synthetic") return c.synthetic_classes;
  throw UsageError("unknown dataset '" + c.dataset + "' (cifar10, cifar100, synthetic)");
}

ExperimentData load_data(const ExperimentConfig& c) {
  ImageDataset full, test;
  if (is_synthetic(c)) {
    full = synthetic_dataset(c.synthetic_n, c.synthetic_classes, c.data_seed, Split::train);
    test = synthetic_dataset(c.synthetic_test_n, c.synthetic_classes, derive_seed(c.data_seed, 0x7E57),
                             Split::test);
  } else {
    dataset_classes(c);
    if (c.data_path.empty()) throw UsageError("--data-path is required for " + c.dataset);
    auto [train, shipped_test] =
        load_cifar(c.data_path, c.dataset == "cifar10" ? CifarVariant::cifar10 : CifarVariant::cifar100);
    full = (c.long_mode || c.subset == 0) ? std::move(train) : take_random(train, c.subset, c.data_seed);
    test = std::move(shipped_test);
  }
  auto [train, val] = split_holdout(full, c.val_fraction, c.seed);
  return {std::move(train), std::move(val), std::move(test)};
}

const ImageDataset& pick_split(const ExperimentData& data, const std::string& split) {
  if (split == "test") return data.test;
  if (split == "val") return data.val;
  if (split == "train") return data.train;
  throw UsageError("unknown split '" + split + "' (train, val, test)");
}

bool use_augmentation(const ExperimentConfig& c) { return c.augment.value_or(true); }

// Synthetic classes are bar orientations 180/k degrees apart (jittered by about
// a fifth of that): no flips, rotations under a quarter of the spacing.
AugmentParams augmentation_params(const ExperimentConfig& c) {
  if (!is_synthetic(c)) return {};
  return {40.0 / static_cast<double>(c.synthetic_classes), 0.2, 0.0};
}

std::ofstream open_output(const std::string& path) {
  if (path.empty()) throw UsageError("an output path is required (--out)");
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(9);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_required(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  return load_checkpoint(path);
}

void check_classes(const BackboneModel& model, const ExperimentConfig& c) {
  if (model.config().num_classes != dataset_classes(c))
    throw UsageError("checkpoint has " + std::to_string(model.config().num_classes) +
                     " classes but dataset " + c.dataset + " has " +
                     std::to_string(dataset_classes(c)));
}

EpochCallback progress(const ExperimentConfig& c, std::ostream& log, const char* phase) {
  if (c.quiet) return {};
  return [&log, phase](const EpochRecord& r) {
    log << phase << " epoch " << r.epoch;
    if (!std::isnan(r.train_loss)) log << " loss " << r.train_loss << " train_acc " << r.train_acc;
    log << " val_acc " << r.val_acc << std::endl;
  };
}

std::string default_path(const ExperimentConfig& c, const std::string& given, const char* name) {
  return given.empty() ? (fs::path(c.out_dir) / name).string() : given;
}

int cmd_pretrain(const ExperimentConfig& c, std::ostream& out, std::ostream& log) {
  const ExperimentData data = load_data(c);
  ToyCnnConfig arch;
  arch.num_classes = dataset_classes(c);
  arch.dropout = static_cast<real>(c.backbone_dropout);
  BackboneModel model = BackboneModel::build(arch, c.seed);

  PretrainHyper hyper;
  hyper.max_epochs = c.max_epochs > 0 ? c.max_epochs : 500;
  hyper.patience = c.patience >= 0 ? c.patience : 50;
  hyper.batch_size = c.batch_size;
  hyper.learning_rate = c.learning_rate;
  hyper.augment = use_augmentation(c);
  hyper.augment_params = augmentation_params(c);
  hyper.seed = c.seed;
  hyper.on_epoch = progress(c, log, "pretrain");
  const TrainResult result = pretrain(model, data.train, data.val, hyper);

  const std::string ckpt = default_path(c, c.out_path, "backbone.ckpt");
  const std::string history = default_path(c, c.history_path, "pretrain_history.csv");
  if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
  save_checkpoint(ckpt, model);
  write_history_csv(history, result.history);
  out << "backbone_params," << model.param_count() << "\nepochs_run," << result.history.size()
      << "\nbest_epoch," << result.best_epoch << "\nbest_val_acc," << std::setprecision(9)
      << result.best_val_acc << '\n';
  return kOk;
}

int cmd_train_attention(const ExperimentConfig& c, std::ostream& out, std::ostream& log) {
  const Checkpoint base = load_required(c.backbone_path, "--backbone");
  check_classes(base.backbone, c);
  const ExperimentData data = load_data(c);
  const auto layers = base.backbone.layers();
  AttentionParams params = AttentionParams::init(layers, c.attention_dim, c.seed);
  log << "trainable attention parameters: " << params.param_count() << std::endl;

  AttentionHyper hyper;
  hyper.max_epochs = c.max_epochs > 0 ? c.max_epochs : 1000;
  hyper.patience = c.patience >= 0 ? c.patience : 500;
  hyper.batch_size = c.batch_size;
  hyper.learning_rate = c.learning_rate;
  hyper.l2 = static_cast<real>(c.l2);
  hyper.key_query_dropout = static_cast<real>(c.key_query_dropout);
  hyper.iterations = c.iterations;
  hyper.augment = use_augmentation(c);
  hyper.augment_params = augmentation_params(c);
  hyper.clamp_gains = c.clamp_gains;
  hyper.seed = c.seed;
  hyper.on_epoch = progress(c, log, "attention");
  const TrainResult result = train_attention(base.backbone, params, data.train, data.val, hyper);

  const std::string ckpt = default_path(c, c.out_path, "attention.ckpt");
  const std::string history = default_path(c, c.history_path, "attention_history.csv");
  if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
  save_checkpoint(ckpt, base.backbone, &params);
  write_history_csv(history, result.history);
  out << "attention_params," << params.param_count() << "\nepochs_run," << result.history.size() - 1
      << "\nbest_epoch," << result.best_epoch << "\nbaseline_val_acc," << std::setprecision(9)
      << result.history.front().val_acc << "\nbest_val_acc," << result.best_val_acc << '\n';
  return kOk;
}

EvalOptions eval_options(const ExperimentConfig& c, const BackboneModel& model, double sigma) {
  EvalOptions o;
  o.iterations = c.iterations;
  if (!c.lesion.empty()) o.lesion = LesionMask::parse(c.lesion, model.layers());
  o.noise_sigma = sigma;
  o.noise_seed = c.noise_seed;
  o.clip_noise = c.clip_noise;
  return o;
}

int cmd_eval(const ExperimentConfig& c, std::ostream&, std::ostream&) {
  const Checkpoint ckpt = load_required(c.checkpoint_path, "--checkpoint");
  check_classes(ckpt.backbone, c);
  const ExperimentData data = load_data(c);
  const ImageDataset& split = pick_split(data, c.split);
  const double sigma = c.sigmas.empty() ? 0.0 : std::stod(c.sigmas);
  const AttentionParams* att = ckpt.attention ? &*ckpt.attention : nullptr;
  const EvalOptions options = eval_options(c, ckpt.backbone, sigma);
  const EvalResult r = evaluate(ckpt.backbone, att, split, options);

  const std::string path = default_path(c, c.out_path, "eval.csv");
  std::ofstream out = open_output(path);
  out << "model,split,lesion,iterations,sigma,accuracy,correct,n,seed\n"
      << (att ? "augmented" : "baseline") << ',' << c.split << ','
      << (att ? (options.lesion.empty() ? LesionMask::full(ckpt.backbone.layers()).str() : options.lesion.str()) : "")
      << ',' << (att ? c.iterations : 0) << ',' << sigma << ',' << r.accuracy << ',' << r.correct << ','
      << r.total << ',' << c.seed << '\n';
  finish(out, path);
  return kOk;
}

std::vector<double> parse_sigmas(const std::string& text) {
  if (text.empty()) return default_noise_grid();
  std::vector<double> sigmas;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      sigmas.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("bad sigma '" + item + "'");
    }
    if (!(sigmas.back() >= 0)) throw UsageError("noise sigma must be >= 0");
  }
  return sigmas;
}

const AttentionParams& require_attention(const Checkpoint& ckpt) {
  if (!ckpt.attention) throw UsageError("checkpoint has no attention parameters");
  return *ckpt.attention;
}

int cmd_noise_sweep(const ExperimentConfig& c, std::ostream&, std::ostream& log) {
  const Checkpoint ckpt = load_required(c.checkpoint_path, "--checkpoint");
  check_classes(ckpt.backbone, c);
  const AttentionParams& att = require_attention(ckpt);
  const ExperimentData data = load_data(c);
  const ImageDataset& split = pick_split(data, c.split);

  const std::string path = default_path(c, c.out_path, "noise_sweep.csv");
  std::ofstream out = open_output(path);
  out << "sigma,baseline_accuracy,augmented_accuracy,difference,n,seed\n";
  for (double sigma : parse_sigmas(c.sigmas)) {
    const EvalOptions options = eval_options(c, ckpt.backbone, sigma);
    const double base = evaluate(ckpt.backbone, nullptr, split, options).accuracy;
    const double aug = evaluate(ckpt.backbone, &att, split, options).accuracy;
    out << sigma << ',' << base << ',' << aug << ',' << aug - base << ',' << split.size() << ','
        << c.seed << '\n';
    if (!c.quiet) log << "sigma " << sigma << " baseline " << base << " augmented " << aug << std::endl;
  }
  finish(out, path);
  return kOk;
}

int cmd_lesion_sweep(const ExperimentConfig& c, std::ostream&, std::ostream& log) {
  const Checkpoint ckpt = load_required(c.checkpoint_path, "--checkpoint");
  check_classes(ckpt.backbone, c);
  const AttentionParams& att = require_attention(ckpt);
  const ExperimentData data = load_data(c);
  const ImageDataset& split = pick_split(data, c.split);
  const auto layers = ckpt.backbone.layers();

  std::vector<LesionMask> masks;
  if (!c.lesion.empty()) {
    std::stringstream in(c.lesion);
    std::string item;
    while (std::getline(in, item, ',')) masks.push_back(LesionMask::parse(item, layers));
  } else {
    masks = LesionMask::enumerate(layers);
  }
  const auto named = named_lesion_masks();
  for (const auto& m : named) LesionMask::parse(m, layers);

  const std::string path = default_path(c, c.out_path, "lesion_sweep.csv");
  std::ofstream out = open_output(path);
  out << "mask,named,accuracy,correct,n,seed\n";
  for (const LesionMask& mask : masks) {
    EvalOptions options = eval_options(c, ckpt.backbone, c.sigmas.empty() ? 0.0 : std::stod(c.sigmas));
    options.lesion = mask;
    const EvalResult r = evaluate(ckpt.backbone, &att, split, options);
    const bool is_named = std::find(named.begin(), named.end(), mask.str()) != named.end();
    out << mask.str() << ',' << (is_named ? 1 : 0) << ',' << r.accuracy << ',' << r.correct << ','
        << r.total << ',' << c.seed << '\n';
    if (!c.quiet) log << "mask " << mask.str() << " accuracy " << r.accuracy << std::endl;
  }
  finish(out, path);
  return kOk;
}

void write_pgm16(const fs::path& path, std::size_t height, std::size_t width,
                 std::span<const real> values, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  for (real v : values) {
    const double scaled = hi > lo ? (static_cast<double>(v) - lo) / (hi - lo) : 0.5;
    const auto level = static_cast<std::uint16_t>(std::lround(std::clamp(scaled, 0.0, 1.0) * 65535.0));
    out.put(static_cast<char>(level >> 8));
    out.put(static_cast<char>(level & 0xFF));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

int cmd_export_maps(const ExperimentConfig& c, std::ostream&, std::ostream&) {
  const Checkpoint ckpt = load_required(c.checkpoint_path, "--checkpoint");
  check_classes(ckpt.backbone, c);
  const AttentionParams& att = require_attention(ckpt);
  const ExperimentData data = load_data(c);
  const ImageDataset& split = pick_split(data, c.split);
  const std::size_t count = std::min(c.export_count, split.size());
  if (count == 0) throw UsageError("--count must be positive");

  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  Tensor images = gather_images(split, idx);
  add_gaussian_noise(images, c.sigmas.empty() ? 0.0 : std::stod(c.sigmas), c.noise_seed, 0, c.clip_noise);

  Tape tape;
  const BoundBackbone net = bind(tape, ckpt.backbone, false);
  RunOptions options;
  options.iterations = c.iterations;
  if (!c.lesion.empty()) options.lesion = LesionMask::parse(c.lesion, ckpt.backbone.layers());
  const RunResult result = run(net, bind(tape, att, false), tape.constant(std::move(images)), options);
  const GattaState& state = result.history.front();
  const auto layers = ckpt.backbone.layers();
  const std::size_t d = att.dim();

  auto open_csv = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    f << std::setprecision(9);
    return f;
  };
  std::ofstream minmax = open_csv("maps_minmax.csv");
  minmax << "image,label,layer,file,min,max,constant\n";
  std::ofstream qcsv = open_csv("q_avg.csv");
  qcsv << "image,label";
  for (std::size_t m = 0; m < d; ++m) qcsv << ",q" << m;
  qcsv << '\n';
  std::vector<std::ofstream> dense_csv;
  for (const auto& layer : layers) {
    if (layer.kind != LayerKind::dense) continue;
    dense_csv.push_back(open_csv("gatta_" + layer.tag + ".csv"));
    dense_csv.back() << "image,label";
    for (std::size_t u = 0; u < layer.channels; ++u) dense_csv.back() << ",u" << u;
    dense_csv.back() << '\n';
  }

  for (std::size_t i = 0; i < count; ++i) {
    const int label = split.labels[i];
    std::size_t dense_slot = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::size_t n = layers[l].positions();
      const std::span<const real> values(state.agreement[l].value().raw() + i * n, n);
      if (layers[l].kind == LayerKind::conv) {
        const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
        const double lo = *lo_it, hi = *hi_it;
        const std::string file = "img" + std::to_string(i) + "_" + layers[l].tag + ".pgm";
        write_pgm16(dir / file, layers[l].height, layers[l].width, values, lo, hi);
        minmax << i << ',' << label << ',' << layers[l].tag << ',' << file << ',' << lo << ',' << hi
               << ',' << (lo == hi ? 1 : 0) << '\n';
      } else {
        std::ofstream& f = dense_csv[dense_slot++];
        f << i << ',' << label;
        for (real v : values) f << ',' << v;
        f << '\n';
      }
    }
    qcsv << i << ',' << label;
    for (std::size_t m = 0; m < d; ++m) qcsv << ',' << state.global_query.value()[i * d + m];
    qcsv << '\n';
  }
  for (auto* f : {&minmax, &qcsv})
    if (!f->flush()) throw IoError("write failed in " + dir.string());
  for (auto& f : dense_csv)
    if (!f.flush()) throw IoError("write failed in " + dir.string());
  return kOk;
}

int cmd_param_audit(const ExperimentConfig& c, std::ostream& out, std::ostream&) {
  std::ostringstream table;
  table << "model,num_classes,d,backbone_params,attention_params\n";
  for (std::size_t classes : {std::size_t{10}, std::size_t{100}}) {
    ToyCnnConfig arch;
    arch.num_classes = classes;
    const BackboneModel model = BackboneModel::build(arch, 0);
    if (model.param_count() != backbone_param_count(arch))
      throw NumericError("backbone count disagrees with closed form");
    const AttentionParams att = AttentionParams::init(model.layers(), c.attention_dim, 0);
    const auto layers = model.layers();
    if (att.param_count() != attention_param_count(c.attention_dim, layers))
      throw NumericError("attention count disagrees with closed form");
    table << "toy," << classes << ',' << c.attention_dim << ',' << model.param_count() << ','
          << att.param_count() << '\n';
  }
  if (!c.checkpoint_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(c.checkpoint_path);
    table << "checkpoint," << ckpt.backbone.config().num_classes << ','
          << (ckpt.attention ? ckpt.attention->dim() : 0) << ',' << ckpt.backbone.param_count() << ','
          << (ckpt.attention ? ckpt.attention->param_count() : 0) << '\n';
  }
  out << table.str();
  if (!c.out_path.empty()) {
    std::ofstream f = open_output(c.out_path);
    f << table.str();
    finish(f, c.out_path);
  }
  return kOk;
}

void add_options(CLI::App& app, ExperimentConfig& c) {
  app.set_config("--config", "", "key=value file; command-line flags override it");
  app.add_option("--dataset", c.dataset, "cifar10 | cifar100 | synthetic")->capture_default_str();
  app.add_option("--data-path", c.data_path, "directory with the CIFAR binary files");
  app.add_option("--subset", c.subset, "training images drawn from CIFAR (0 = all)")->capture_default_str();
  app.add_flag("--long", c.long_mode, "use the full CIFAR training set");
  app.add_option("--synthetic-n", c.synthetic_n, "synthetic training+validation images")->capture_default_str();
  app.add_option("--synthetic-test-n", c.synthetic_test_n, "synthetic test images")->capture_default_str();
  app.add_option("--synthetic-classes", c.synthetic_classes)->capture_default_str();
  app.add_option("--data-seed", c.data_seed, "seed for synthetic data and CIFAR subsetting")->capture_default_str();
  app.add_option("--val-fraction", c.val_fraction)->capture_default_str();
  app.add_option("--split", c.split, "evaluation split: test | val | train")->capture_default_str();
  app.add_option("--seed", c.seed, "model, split and training seed")->capture_default_str();
  app.add_option("-d,--attention-dim", c.attention_dim, "key/query dimension")->capture_default_str();
  app.add_option("--iterations", c.iterations, "modulated passes after the clean pass")->capture_default_str();
  app.add_option("--lesion", c.lesion, "lesion mask such as cccdd or c.cdd (comma list for lesion-sweep)");
  app.add_option("--sigmas", c.sigmas, "noise sigma (eval) or comma list (noise-sweep)");
  app.add_option("--noise-seed", c.noise_seed)->capture_default_str();
  app.add_flag("--clip-noise", c.clip_noise, "clip noisy pixels to [0,1]");
  app.add_option("--lr", c.learning_rate)->capture_default_str();
  app.add_option("--batch-size", c.batch_size)->capture_default_str();
  app.add_option("--epochs", c.max_epochs, "maximum epochs (default 500 pretrain, 1000 attention)");
  app.add_option("--patience", c.patience, "early-stopping patience (default 50 pretrain, 500 attention)");
  app.add_option("--dropout", c.backbone_dropout, "backbone dropout rate")->capture_default_str();
  app.add_option("--kq-dropout", c.key_query_dropout, "key/query dropout rate")->capture_default_str();
  app.add_option("--l2", c.l2, "L2 weight on key/query matrices")->capture_default_str();
  app.add_flag("--augment,!--no-augment", c.augment,
               "training augmentation (default on; synthetic data gets small rotations and shifts, no flips)");
  app.add_flag("--clamp-gains", c.clamp_gains, "clamp 1 + alpha * score at zero");
  app.add_option("--backbone", c.backbone_path, "backbone checkpoint (train-attention)");
  app.add_option("--checkpoint", c.checkpoint_path, "checkpoint to evaluate or export");
  app.add_option("--out", c.out_path, "output checkpoint or CSV file");
  app.add_option("--history", c.history_path, "per-epoch CSV");
  app.add_option("--out-dir", c.out_dir, "directory for default outputs and exported maps")->capture_default_str();
  app.add_option("--count", c.export_count, "images exported by export-maps")->capture_default_str();
  app.add_flag("-q,--quiet", c.quiet, "no progress output");
}

void validate(ExperimentConfig& c, std::ostream& log) {
  if (c.attention_dim == 0) throw UsageError("attention dimension must be positive");
  static constexpr std::size_t kStudied[] = {4, 8, 16, 32, 64};
  if (std::find(std::begin(kStudied), std::end(kStudied), c.attention_dim) == std::end(kStudied))
    log << "warning: attention dimension " << c.attention_dim << " is outside {4,8,16,32,64}\n";
  if (c.iterations < 1) throw UsageError("--iterations must be >= 1");
  if (c.batch_size == 0) throw UsageError("--batch-size must be positive");
  if (!(c.key_query_dropout >= 0 && c.key_query_dropout < 1)) throw UsageError("--kq-dropout must lie in [0,1)");
  if (!(c.backbone_dropout >= 0 && c.backbone_dropout < 1)) throw UsageError("--dropout must lie in [0,1)");
  if (!(c.val_fraction > 0 && c.val_fraction < 1)) throw UsageError("--val-fraction must lie in (0,1)");
  dataset_classes(c);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  ExperimentConfig config;
  CLI::App app{"Global attention agreement on a toy CNN: training, evaluation and ablations"};
  app.require_subcommand(1);
  add_options(app, config);

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const ExperimentConfig&, std::ostream&, std::ostream&);
  };
  const Command commands[] = {
      {"pretrain-backbone", "train the backbone CNN and write a checkpoint", cmd_pretrain},
      {"train-attention", "train keys/queries/alphas on a frozen backbone", cmd_train_attention},
      {"eval", "accuracy of a checkpoint on one split", cmd_eval},
      {"noise-sweep", "baseline vs augmented accuracy under Gaussian input noise", cmd_noise_sweep},
      {"lesion-sweep", "accuracy for each lesion mask", cmd_lesion_sweep},
      {"export-maps", "agreement maps (PGM) and global queries (CSV) for a few images", cmd_export_maps},
      {"param-audit", "backbone and attention parameter counts", cmd_param_audit},
  };
  for (const auto& cmd : commands) app.add_subcommand(cmd.name, cmd.help)->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? kOk : kUsage;
  }

  try {
    validate(config, log);
    for (const auto& cmd : commands)
      if (app.got_subcommand(cmd.name)) {
        config.command = cmd.name;
        return cmd.fn(config, out, log);
      }
    return kUsage;
  } catch (const UsageError& e) {
    log << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    log << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    log << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    log << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace gatta::cli
