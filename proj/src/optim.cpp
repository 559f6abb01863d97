#include "gatta/optim.hpp"

#include <cmath>

#include "gatta/error.hpp"
#include "gatta/ops.hpp"

namespace gatta {

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: parameter and gradient counts differ");
  if (first_.empty()) {
    for (Tensor* p : params) {
      first_.emplace_back(p->shape());
      second_.emplace_back(p->shape());
    }
  }
  if (first_.size() != params.size())
    throw std::invalid_argument("adam: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) continue;
    if (grads[i]->shape() != params[i]->shape() || first_[i].shape() != params[i]->shape())
      throw std::invalid_argument("adam: shape mismatch for parameter " + std::to_string(i));
    if (!grads[i]->all_finite())
      throw NumericError("adam: non-finite gradient for parameter " + std::to_string(i));
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const real b1 = static_cast<real>(config_.beta1);
  const real b2 = static_cast<real>(config_.beta2);
  const real step_size = static_cast<real>(config_.learning_rate / c1);
  const real inv_c2 = static_cast<real>(1.0 / c2);
  const real eps = static_cast<real>(config_.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) continue;
    real* p = params[i]->raw();
    real* m = first_[i].raw();
    real* v = second_[i].raw();
    const real* g = grads[i]->raw();
    const std::size_t n = params[i]->numel();
#pragma omp parallel for simd schedule(static)
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (real(1) - b1) * g[j];
      v[j] = b2 * v[j] + (real(1) - b2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

bool EarlyStopper::update(double metric, std::span<const Tensor* const> params) {
  ++epoch_;
  if (best_epoch_ < 0 || metric > best_) {
    best_ = metric;
    best_epoch_ = epoch_;
    since_ = 0;
    snapshot_.clear();
    for (const Tensor* p : params) snapshot_.push_back(*p);
    return false;
  }
  ++since_;
  return since_ > patience_;
}

void EarlyStopper::restore(std::span<Tensor* const> params) const {
  if (snapshot_.size() != params.size())
    throw std::logic_error("early stopper: no snapshot matching these parameters");
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = snapshot_[i];
}

Var l2_penalty(std::span<const Var> weights, real lambda) {
  if (weights.empty()) throw std::invalid_argument("l2_penalty: no weights");
  Var total = sum_squares(weights[0]);
  for (std::size_t i = 1; i < weights.size(); ++i) total = add(total, sum_squares(weights[i]));
  return scale(total, lambda);
}

}  // namespace gatta
