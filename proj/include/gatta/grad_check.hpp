#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gatta/tape.hpp"

namespace gatta {

/// Builds a scalar loss on `tape` from parameter leaves (one per checked tensor).
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
  /// Largest probe step. Each element is also probed at eps/4, eps/16, ...
  /// (`refinements` more steps), plus the Richardson combination of each
  /// neighbouring pair, and the best-agreeing estimate is kept: large steps
  /// cross relu/max kinks or pick up curvature, small ones drown in float
  /// rounding, a wrong backward rule disagrees with all of them. Steps whose
  /// probes take different relu/max/clamp branches than p itself are dropped.
  double eps = 1e-2;
  int refinements = 2;
  /// Rounding allowance: each estimate may differ from the analytic value by
  /// loss_ulps units in the last place of the loss, over the probe width,
  /// before that counts as error.
  double loss_ulps = 2;
  /// Denominator floor: err = max(0, |a - n| - slack) / max(|a|, |n|, floor).
  double floor = 1e-3;
  /// Elements sampled per tensor; 0 checks every element.
  std::size_t max_elements = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  /// Elements skipped because every probe step changed a branch choice.
  std::size_t kink_blocked = 0;
};

/// Compares tape gradients of `f` against central finite differences
/// (f(p+eps) - f(p-eps)) / (2 eps). `f` must be deterministic. Tensors are
/// restored on return. Throws NumericError on a non-finite loss.
GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor* const> params,
                           const GradCheckOptions& options = {});

}  // namespace gatta
