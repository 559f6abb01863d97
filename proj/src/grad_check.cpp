#include "gatta/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gatta/error.hpp"
#include "gatta/rng.hpp"

namespace gatta {
namespace {

struct Probe {
  double value;
  std::uint64_t branches;
};

Probe evaluate(const ScalarFn& f, std::span<Tensor* const> params) {
  Tape tape;
  std::vector<Var> leaves;
  for (Tensor* p : params) leaves.push_back(tape.constant_ref(*p));
  const double value = f(tape, leaves).value()[0];
  if (!std::isfinite(value)) throw NumericError("grad_check: non-finite loss");
  return {value, tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor* const> params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  std::uint64_t branches = 0;
  double loss_ulp = 0;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (Tensor* p : params) leaves.push_back(tape.parameter_ref(*p));
    Var loss = f(tape, leaves);
    if (!loss.value().all_finite()) throw NumericError("grad_check: non-finite loss");
    branches = tape.branch_signature();
    const real l = loss.value()[0];
    loss_ulp = static_cast<double>(std::nextafter(std::abs(l), std::numeric_limits<real>::infinity()) - std::abs(l));
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor* g = tape.grad(leaves[i]);
      analytic.push_back(g ? *g : Tensor(params[i]->shape()));
    }
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    std::vector<std::size_t> indices(p.numel());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_elements > 0 && options.max_elements < indices.size()) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements);
      std::sort(indices.begin(), indices.end());
    }
    for (std::size_t idx : indices) {
      const real saved = p[idx];
      const double a = analytic[t][idx];
      double err = std::numeric_limits<double>::infinity(), numeric = 0.0;
      // `slack`: what rounding of the loss alone can put into an estimate
      auto consider = [&](double n, double slack) {
        const double denom = std::max({std::abs(a), std::abs(n), options.floor});
        const double e = std::max(0.0, std::abs(a - n) - slack) / denom;
        if (e < err) err = e, numeric = n;
      };
      double step = options.eps, previous = std::numeric_limits<double>::quiet_NaN();
      for (int r = 0; r <= options.refinements; ++r, step /= 4) {
        p[idx] = static_cast<real>(saved + step);
        const double up_step = static_cast<double>(p[idx]) - saved;
        const Probe up = evaluate(f, params);
        p[idx] = static_cast<real>(saved - step);
        const double down_step = saved - static_cast<double>(p[idx]);
        const Probe down = evaluate(f, params);
        p[idx] = saved;
        // a step that flips a relu, max or clamp measures a different function
        if (up_step + down_step <= 0 || up.branches != branches || down.branches != branches) {
          previous = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const double n = (up.value - down.value) / (up_step + down_step);
        const double slack = options.loss_ulps * loss_ulp / (up_step + down_step);
        consider(n, slack);
        // Richardson: cancels the h^2 term between steps h and h/4
        if (!std::isnan(previous)) consider((16 * n - previous) / 15, (16 * slack + slack / 4) / 15);
        previous = n;
      }
      if (std::isinf(err)) {
        ++result.kink_blocked;
        continue;
      }
      ++result.checked;
      if (result.checked == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = t;
        result.worst_index = idx;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace gatta
