#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gatta/tape.hpp"

namespace gatta {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter tensors.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// params[i] -= lr * mhat / (sqrt(vhat) + eps). Moments are created on the
  /// first call; later calls must pass the same shapes. Throws NumericError on
  /// a non-finite gradient before touching any parameter.
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
};

/// Stops once the monitored metric has failed to improve for more than
/// `patience` consecutive epochs; keeps a copy of the best parameters.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  /// Records an epoch's metric. Returns true when training should stop.
  bool update(double metric, std::span<const Tensor* const> params);

  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_since_improvement() const { return since_; }
  bool has_snapshot() const { return !snapshot_.empty(); }
  /// Copies the best snapshot back into `params`.
  void restore(std::span<Tensor* const> params) const;

 private:
  int patience_;
  double best_ = 0.0;
  int best_epoch_ = -1;
  int epoch_ = -1;
  int since_ = 0;
  std::vector<Tensor> snapshot_;
};

/// lambda * sum of squares over `weights`, recorded on the tape (gradient 2*lambda*w).
Var l2_penalty(std::span<const Var> weights, real lambda);

}  // namespace gatta
