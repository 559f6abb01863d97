#include "gatta/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "gatta/error.hpp"
#include "gatta/kernels.hpp"

namespace gatta {
namespace {

using kernels::Trans;

template <class Pred>
std::uint64_t pattern_digest(const Tensor& t, Pred pred) {
  std::uint64_t digest = t.numel(), word = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    word = word << 1 | static_cast<std::uint64_t>(pred(t[i]));
    if (i % 64 == 63) digest = derive_seed(digest, word), word = 0;
  }
  return derive_seed(digest, word);
}

void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw std::invalid_argument(op + ": " + what);
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void accumulate(Tape& tape, Var target, Tensor&& delta) {
  tape.accumulate_grad(target, std::move(delta));
}

void accumulate(Tape& tape, Var target, const Tensor& delta) {
  if (!target.requires_grad()) return;
  tape.accumulate_grad(target, Tensor(delta));
}

template <typename F>
Tensor map(const Tensor& in, F f) {
  Tensor out = Tensor::uninitialized(in.shape());
  const real* src = in.raw();
  real* dst = out.raw();
  const std::size_t n = in.numel();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out = Tensor::uninitialized(a.shape());
  const real* pa = a.raw();
  const real* pb = b.raw();
  real* dst = out.raw();
  const std::size_t n = a.numel();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) dst[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().record("add", zip(a.value(), b.value(), [](real x, real y) { return x + y; }),
                         {a, b}, [a, b](Tape& t, const Tensor& g) {
                           accumulate(t, a, g);
                           accumulate(t, b, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().record("sub", zip(a.value(), b.value(), [](real x, real y) { return x - y; }),
                         {a, b}, [a, b](Tape& t, const Tensor& g) {
                           accumulate(t, a, g);
                           accumulate(t, b, map(g, [](real v) { return -v; }));
                         });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  return a.tape().record("mul", zip(a.value(), b.value(), [](real x, real y) { return x * y; }),
                         {a, b}, [a, b](Tape& t, const Tensor& g) {
                           auto times = [](real x, real y) { return x * y; };
                           if (a.requires_grad()) accumulate(t, a, zip(g, b.value(), times));
                           if (b.requires_grad()) accumulate(t, b, zip(g, a.value(), times));
                         });
}

Var scale(Var a, real factor) {
  return a.tape().record("scale", map(a.value(), [factor](real x) { return x * factor; }), {a},
                         [a, factor](Tape& t, const Tensor& g) {
                           accumulate(t, a, map(g, [factor](real v) { return v * factor; }));
                         });
}

Var add_scalar(Var a, real value) {
  return a.tape().record("add_scalar", map(a.value(), [value](real x) { return x + value; }), {a},
                         [a](Tape& t, const Tensor& g) { accumulate(t, a, g); });
}

Var sum(Var a) {
  double total = 0.0;
  for (real v : a.value().data()) total += v;
  return a.tape().record("sum", Tensor({1}, static_cast<real>(total)), {a},
                         [a](Tape& t, const Tensor& g) {
                           accumulate(t, a, Tensor(a.shape(), g[0]));
                         });
}

Var mean(Var a) {
  require(a.numel() > 0, "mean", "empty input");
  return scale(sum(a), real(1) / static_cast<real>(a.numel()));
}

Var sum_squares(Var a) {
  double total = 0.0;
  for (real v : a.value().data()) total += static_cast<double>(v) * v;
  return a.tape().record("sum_squares", Tensor({1}, static_cast<real>(total)), {a},
                         [a](Tape& t, const Tensor& g) {
                           const real k = 2 * g[0];
                           accumulate(t, a, map(a.value(), [k](real x) { return k * x; }));
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    accumulate(t, a, g.reshaped(a.shape()));
  });
}

Var relu(Var x) {
  x.tape().note_branches(pattern_digest(x.value(), [](real v) { return v > real(0); }));
  return x.tape().record(
      "relu", map(x.value(), [](real v) { return v > real(0) ? v : real(0); }), {x},
      [x](Tape& t, const Tensor& g) {
        accumulate(t, x, zip(g, x.value(), [](real gv, real v) { return v > real(0) ? gv : real(0); }));
      });
}

Var matmul(Var x, Var w) {
  require(x.value().rank() == 2 && w.value().rank() == 2, "matmul", "expects rank-2 operands");
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  require(w.shape()[0] == k, "matmul",
          "inner dimension mismatch " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  Tensor out = Tensor::uninitialized({m, n});
  kernels::gemm(Trans::no, Trans::no, m, n, k, x.value().raw(), k, w.value().raw(), n, real(0),
                out.raw(), n);
  return x.tape().record("matmul", std::move(out), {x, w},
                         [x, w, m, n, k](Tape& t, const Tensor& g) {
                           if (x.requires_grad())
                             kernels::gemm(Trans::no, Trans::yes, m, k, n, g.raw(), n,
                                           w.value().raw(), n, real(1),
                                           t.grad_slot(x).raw(), k);
                           if (w.requires_grad())
                             kernels::gemm(Trans::yes, Trans::no, k, n, m, x.value().raw(), k,
                                           g.raw(), n, real(1), t.grad_slot(w).raw(), n);
                         });
}

Var add_bias(Var x, Var bias) {
  require(bias.value().rank() == 1, "add_bias", "bias must be rank 1");
  const std::size_t n = bias.numel();
  require(x.value().rank() >= 1 && x.shape().back() == n, "add_bias",
          "trailing dimension of " + shape_str(x.shape()) + " must equal " + std::to_string(n));
  Tensor out = x.value();
  const std::size_t rows = out.numel() / n;
  const real* b = bias.value().raw();
  real* dst = out.raw();
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) dst[r * n + j] += b[j];
  return x.tape().record("add_bias", std::move(out), {x, bias},
                         [x, bias, rows, n](Tape& t, const Tensor& g) {
                           accumulate(t, x, g);
                           if (bias.requires_grad())
                             kernels::column_sums(rows, n, g.raw(), t.grad_slot(bias).raw());
                         });
}

Var dense(Var x, Var w, Var bias) { return add_bias(matmul(x, w), bias); }

Var conv2d(Var x, Var kernel, Var bias) {
  const Tensor& in = x.value();
  const Tensor& k = kernel.value();
  require(in.rank() == 4, "conv2d", "input must be [b,h,w,c], got " + shape_str(in.shape()));
  require(k.rank() == 4 && k.dim(0) == 3 && k.dim(1) == 3, "conv2d",
          "kernel must be [3,3,c_in,c_out], got " + shape_str(k.shape()));
  require(k.dim(2) == in.dim(3), "conv2d",
          "input channels " + std::to_string(in.dim(3)) + " do not match kernel c_in " +
              std::to_string(k.dim(2)));
  require(bias.value().rank() == 1 && bias.numel() == k.dim(3), "conv2d",
          "bias must be [c_out]");
  const kernels::ConvGeometry geo{in.dim(0), in.dim(1), in.dim(2), in.dim(3), k.dim(3)};

  Tensor cols = Tensor::uninitialized({geo.rows(), geo.patch()});
  Tensor out = Tensor::uninitialized({geo.batch, geo.height, geo.width, geo.out_channels});
  kernels::conv2d_forward(geo, in.raw(), k.raw(), bias.value().raw(), out.raw(), cols.raw());
  if (!kernel.requires_grad()) cols = Tensor();

  return x.tape().record(
      "conv2d", std::move(out), {x, kernel, bias},
      [x, kernel, bias, geo, cols = std::move(cols)](Tape& t, const Tensor& g) {
        if (bias.requires_grad())
          kernels::column_sums(geo.rows(), geo.out_channels, g.raw(), t.grad_slot(bias).raw());
        if (kernel.requires_grad())
          kernels::gemm(Trans::yes, Trans::no, geo.patch(), geo.out_channels, geo.rows(),
                        cols.raw(), geo.patch(), g.raw(), geo.out_channels, real(1),
                        t.grad_slot(kernel).raw(), geo.out_channels);
        if (x.requires_grad()) {
          Tensor dcols = Tensor::uninitialized({geo.rows(), geo.patch()});
          kernels::gemm(Trans::no, Trans::yes, geo.rows(), geo.patch(), geo.out_channels,
                        g.raw(), geo.out_channels, kernel.value().raw(), geo.out_channels,
                        real(0), dcols.raw(), geo.patch());
          kernels::col2im3x3(geo, dcols.raw(), t.grad_slot(x).raw());
        }
      });
}

Var maxpool2x2(Var x) {
  const Tensor& in = x.value();
  require(in.rank() == 4, "maxpool2x2", "input must be [b,h,w,c]");
  require(in.dim(1) % 2 == 0 && in.dim(2) % 2 == 0, "maxpool2x2",
          "spatial dimensions must be even, got " + shape_str(in.shape()));
  require(in.numel() <= std::numeric_limits<std::uint32_t>::max(), "maxpool2x2", "input too large");
  Tensor out = Tensor::uninitialized({in.dim(0), in.dim(1) / 2, in.dim(2) / 2, in.dim(3)});
  std::vector<std::uint32_t> argmax(out.numel());
  kernels::maxpool2x2_forward(in.dim(0), in.dim(1), in.dim(2), in.dim(3), in.raw(), out.raw(),
                              argmax.data());
  std::uint64_t digest = argmax.size();
  for (std::uint32_t a : argmax) digest = digest * 0x100000001B3ull ^ a;
  x.tape().note_branches(digest);
  return x.tape().record("maxpool2x2", std::move(out), {x},
                         [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                           if (!x.requires_grad()) return;
                           kernels::maxpool2x2_backward(g.numel(), g.raw(), argmax.data(),
                                                        t.grad_slot(x).raw());
                         });
}

Var dropout(Var x, real rate, bool training, Rng& rng) {
  require(rate >= real(0) && rate < real(1), "dropout",
          "rate must lie in [0,1), got " + std::to_string(rate));
  if (!training || rate == real(0)) return x;
  const real keep_scale = real(1) / (real(1) - rate);
  // One stream key from the caller's rng, then a counter hash per element so
  // the mask can be filled in parallel and stays independent of thread count.
  const std::uint64_t key = rng();
  Tensor mask = Tensor::uninitialized(x.shape());
  real* mp = mask.raw();
  const std::size_t n = mask.numel();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(splitmix64(key ^ (i * 0xD1B54A32D192ED03ULL)) >> 11) * 0x1.0p-53;
    mp[i] = u >= rate ? keep_scale : real(0);
  }
  auto times = [](real a, real b) { return a * b; };
  Tensor out = zip(x.value(), mask, times);
  return x.tape().record("dropout", std::move(out), {x},
                         [x, mask = std::move(mask), times](Tape& t, const Tensor& g) {
                           accumulate(t, x, zip(g, mask, times));
                         });
}

Var scale_add(Var x, Var g, bool clamp) {
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  require(gs.size() <= xs.size() && std::equal(gs.begin(), gs.end(), xs.begin()), "scale_add",
          "gain shape " + shape_str(gs) + " is not a prefix of " + shape_str(xs));
  const std::size_t rows = g.numel();
  const std::size_t inner = rows == 0 ? 0 : x.numel() / rows;
  const real* xv = x.value().raw();
  const real* gv = g.value().raw();

  auto factor = [clamp](real gain) {
    const real f = real(1) + gain;
    return clamp && f < real(0) ? real(0) : f;
  };
  if (clamp) x.tape().note_branches(pattern_digest(g.value(), [](real v) { return real(1) + v >= real(0); }));
  Tensor out = Tensor::uninitialized(xs);
  real* dst = out.raw();
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const real f = factor(gv[r]);
    for (std::size_t i = 0; i < inner; ++i) dst[r * inner + i] = xv[r * inner + i] * f;
  }
  return x.tape().record(
      "scale_add", std::move(out), {x, g},
      [x, g, rows, inner, factor, clamp](Tape& t, const Tensor& gy) {
        const real* xv = x.value().raw();
        const real* gv = g.value().raw();
        const real* dy = gy.raw();
        if (x.requires_grad()) {
          real* dx = t.grad_slot(x).raw();
#pragma omp parallel for schedule(static)
          for (std::size_t r = 0; r < rows; ++r) {
            const real f = factor(gv[r]);
            for (std::size_t i = 0; i < inner; ++i) dx[r * inner + i] += dy[r * inner + i] * f;
          }
        }
        if (g.requires_grad()) {
          real* dg = t.grad_slot(g).raw();
#pragma omp parallel for schedule(static)
          for (std::size_t r = 0; r < rows; ++r) {
            if (clamp && real(1) + gv[r] < real(0)) continue;
            real acc = 0;
            for (std::size_t i = 0; i < inner; ++i) acc += dy[r * inner + i] * xv[r * inner + i];
            dg[r] += acc;
          }
        }
      });
}

Var mul_scalar(Var x, Var s) {
  require(s.numel() == 1, "mul_scalar", "scale must have one element");
  const real sv = s.value()[0];
  return x.tape().record("mul_scalar", map(x.value(), [sv](real v) { return v * sv; }), {x, s},
                         [x, s](Tape& t, const Tensor& g) {
                           const real sv = s.value()[0];
                           if (x.requires_grad())
                             accumulate(t, x, map(g, [sv](real v) { return v * sv; }));
                           if (s.requires_grad()) {
                             double acc = 0.0;
                             const real* xv = x.value().raw();
                             for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * xv[i];
                             t.grad_slot(s)[0] += static_cast<real>(acc);
                           }
                         });
}

Var row_outer(Var a, Var w, Var bias) {
  require(a.value().rank() == 2 && w.value().rank() == 2, "row_outer", "expects a[b,c], w[c,d]");
  const std::size_t b = a.shape()[0], c = a.shape()[1], d = w.shape()[1];
  require(w.shape()[0] == c, "row_outer",
          "unit count " + std::to_string(c) + " does not match weight rows " +
              std::to_string(w.shape()[0]));
  require(bias.value().rank() == 1 && bias.numel() == d, "row_outer", "bias must be [d]");
  const real* av = a.value().raw();
  const real* wv = w.value().raw();
  const real* bv = bias.value().raw();
  Tensor out({b, c, d});
  real* dst = out.raw();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t u = 0; u < c; ++u)
      for (std::size_t m = 0; m < d; ++m)
        dst[(n * c + u) * d + m] = av[n * c + u] * wv[u * d + m] + bv[m];
  return a.tape().record(
      "row_outer", std::move(out), {a, w, bias}, [a, w, bias, b, c, d](Tape& t, const Tensor& g) {
        const real* gy = g.raw();
        if (a.requires_grad()) {
          real* da = t.grad_slot(a).raw();
          const real* wv = w.value().raw();
          for (std::size_t n = 0; n < b; ++n)
            for (std::size_t u = 0; u < c; ++u) {
              real acc = 0;
              for (std::size_t m = 0; m < d; ++m) acc += gy[(n * c + u) * d + m] * wv[u * d + m];
              da[n * c + u] += acc;
            }
        }
        if (w.requires_grad()) {
          real* dw = t.grad_slot(w).raw();
          const real* av = a.value().raw();
          for (std::size_t n = 0; n < b; ++n)
            for (std::size_t u = 0; u < c; ++u)
              for (std::size_t m = 0; m < d; ++m)
                dw[u * d + m] += gy[(n * c + u) * d + m] * av[n * c + u];
        }
        if (bias.requires_grad())
          kernels::column_sums(b * c, d, gy, t.grad_slot(bias).raw());
      });
}

Var mean_axis1(Var x) {
  require(x.value().rank() == 3, "mean_axis1", "expects [b,p,d]");
  const std::size_t b = x.shape()[0], p = x.shape()[1], d = x.shape()[2];
  require(p > 0, "mean_axis1", "empty axis");
  const real* xv = x.value().raw();
  Tensor out({b, d});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t m = 0; m < d; ++m) {
      double acc = 0.0;
      for (std::size_t i = 0; i < p; ++i) acc += xv[(n * p + i) * d + m];
      out[n * d + m] = static_cast<real>(acc / static_cast<double>(p));
    }
  return x.tape().record("mean_axis1", std::move(out), {x}, [x, b, p, d](Tape& t, const Tensor& g) {
    real* dx = t.grad_slot(x).raw();
    const real inv = real(1) / static_cast<real>(p);
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t m = 0; m < d; ++m) dx[(n * p + i) * d + m] += g[n * d + m] * inv;
  });
}

Var batched_dot(Var keys, Var q) {
  require(keys.value().rank() == 3 && q.value().rank() == 2, "batched_dot",
          "expects keys[b,p,d] and q[b,d]");
  const std::size_t b = keys.shape()[0], p = keys.shape()[1], d = keys.shape()[2];
  require(q.shape()[0] == b && q.shape()[1] == d, "batched_dot",
          "key width/batch " + shape_str(keys.shape()) + " does not match query " +
              shape_str(q.shape()));
  const real* kv = keys.value().raw();
  const real* qv = q.value().raw();
  Tensor out({b, p});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < p; ++i) {
      real acc = 0;
      for (std::size_t m = 0; m < d; ++m) acc += kv[(n * p + i) * d + m] * qv[n * d + m];
      out[n * p + i] = acc;
    }
  return keys.tape().record(
      "batched_dot", std::move(out), {keys, q}, [keys, q, b, p, d](Tape& t, const Tensor& g) {
        const real* kv = keys.value().raw();
        const real* qv = q.value().raw();
        if (keys.requires_grad()) {
          real* dk = t.grad_slot(keys).raw();
          for (std::size_t n = 0; n < b; ++n)
            for (std::size_t i = 0; i < p; ++i)
              for (std::size_t m = 0; m < d; ++m) dk[(n * p + i) * d + m] += g[n * p + i] * qv[n * d + m];
        }
        if (q.requires_grad()) {
          real* dq = t.grad_slot(q).raw();
          for (std::size_t n = 0; n < b; ++n)
            for (std::size_t i = 0; i < p; ++i)
              for (std::size_t m = 0; m < d; ++m) dq[n * d + m] += g[n * p + i] * kv[(n * p + i) * d + m];
        }
      });
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, "softmax", "expects [b,n]");
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < b; ++r) {
    const real* row = logits.raw() + r * n;
    const real top = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(row[j] - top));
    for (std::size_t j = 0; j < n; ++j)
      out[r * n + j] = static_cast<real>(std::exp(static_cast<double>(row[j] - top)) / total);
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require(z.rank() == 2, "softmax_cross_entropy", "expects logits [b,n]");
  const std::size_t b = z.dim(0), n = z.dim(1);
  require(labels.size() == b, "softmax_cross_entropy",
          std::to_string(labels.size()) + " labels for batch of " + std::to_string(b));
  require(b > 0, "softmax_cross_entropy", "empty batch");
  for (int label : labels)
    require(label >= 0 && static_cast<std::size_t>(label) < n, "softmax_cross_entropy",
            "label " + std::to_string(label) + " out of range");
  Tensor probs = softmax(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const real* row = z.raw() + r * n;
    const real top = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(row[j] - top));
    loss += std::log(total) + top - row[labels[r]];
  }
  loss /= static_cast<double>(b);
  std::vector<int> kept(labels.begin(), labels.end());
  return logits.tape().record(
      "softmax_cross_entropy", Tensor({1}, static_cast<real>(loss)), {logits},
      [logits, probs = std::move(probs), kept = std::move(kept), b, n](Tape& t, const Tensor& g) {
        Tensor delta = probs;
        for (std::size_t r = 0; r < b; ++r) delta[r * n + kept[r]] -= real(1);
        const real k = g[0] / static_cast<real>(b);
        for (real& v : delta.data()) v *= k;
        accumulate(t, logits, delta);
      });
}

}  // namespace gatta
