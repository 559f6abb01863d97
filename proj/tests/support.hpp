#pragma once

#include <algorithm>
#include <cmath>

#include "gatta/rng.hpp"
#include "gatta/tensor.hpp"

namespace gatta::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (real& v : t.data()) v = static_cast<real>(uniform(rng, lo, hi));
  return t;
}

// Values with |v| >= gap so that relu / max kinks sit far from any finite-difference probe.
inline Tensor away_from_zero(Shape shape, Rng& rng, double gap = 0.1) {
  Tensor t(std::move(shape));
  for (real& v : t.data()) {
    const double m = uniform(rng, gap, 1.0);
    v = static_cast<real>(rng() & 1 ? m : -m);
  }
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  return worst;
}

}  // namespace gatta::test
