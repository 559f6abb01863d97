#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "gatta/attention.hpp"
#include "gatta/augment.hpp"
#include "gatta/dataset.hpp"
#include "gatta/optim.hpp"

namespace gatta {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  ///< NaN for the pre-training evaluation row
  double train_acc = 0.0;   ///< NaN for the pre-training evaluation row
  double val_acc = 0.0;
};

using History = std::vector<EpochRecord>;

/// CSV with header `epoch,train_loss,train_acc,val_acc`; NaN fields are left empty.
void write_history_csv(const std::filesystem::path& path, const History& history);

using EpochCallback = std::function<void(const EpochRecord&)>;

struct PretrainHyper {
  int max_epochs = 500;
  int patience = 50;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  bool augment = true;
  AugmentParams augment_params;
  std::uint64_t seed = 0;
  EpochCallback on_epoch;
};

struct TrainResult {
  History history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

/// Adam on cross-entropy with backbone dropout and optional augmentation.
/// Early-stops on validation accuracy and leaves the best-epoch weights in `model`.
TrainResult pretrain(BackboneModel& model, const ImageDataset& train, const ImageDataset& val,
                     const PretrainHyper& hyper);

struct AttentionHyper {
  int max_epochs = 1000;
  int patience = 500;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  real l2 = real(1e-5);
  real key_query_dropout = real(0.25);
  int iterations = 1;
  bool augment = true;
  AugmentParams augment_params;
  bool clamp_gains = false;
  std::uint64_t seed = 0;
  EpochCallback on_epoch;
};

/// Trains only the attention tensors against a frozen backbone (taken by
/// const reference; its dropout is off). Loss is cross-entropy on final-pass
/// logits plus l2 * (|K|^2 + |Q|^2) over projection weights. History row 0
/// is the untrained evaluation; the best-validation parameters are restored.
TrainResult train_attention(const BackboneModel& model, AttentionParams& params,
                            const ImageDataset& train, const ImageDataset& val,
                            const AttentionHyper& hyper);

struct EvalOptions {
  LesionMask lesion;  ///< empty: every layer modulated
  int iterations = 1;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  bool clip_noise = false;
  std::size_t batch_size = 250;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::size_t> class_correct;
  std::vector<std::size_t> class_total;
};

/// Logits for every image, in dataset order. `attention` null means the plain backbone.
Tensor predict_logits(const BackboneModel& model, const AttentionParams* attention,
                      const ImageDataset& data, const EvalOptions& options = {});

/// Top-1 accuracy (first maximum wins ties) with per-class counts.
EvalResult score_logits(const Tensor& logits, std::span<const int> labels, std::size_t num_classes);

EvalResult evaluate(const BackboneModel& model, const AttentionParams* attention,
                    const ImageDataset& data, const EvalOptions& options = {});

}  // namespace gatta
