#include <algorithm>
#include <limits>

#include "gatta/kernels.hpp"

namespace gatta::kernels::reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, std::size_t lda, const real* b, std::size_t ldb, real beta,
          real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const real av = trans_a == Trans::no ? a[i * lda + p] : a[p * lda + i];
        const real bv = trans_b == Trans::no ? b[p * ldb + j] : b[j * ldb + p];
        sum += static_cast<double>(av) * bv;
      }
      const real prior = beta == real(0) ? real(0) : beta * c[i * ldc + j];
      c[i * ldc + j] = prior + static_cast<real>(sum);
    }
  }
}

namespace {

bool inside(const ConvGeometry& g, std::ptrdiff_t y, std::ptrdiff_t x) {
  return y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.height) &&
         x < static_cast<std::ptrdiff_t>(g.width);
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const real* input, const real* kernel,
                    const real* bias, real* output) {
  const std::size_t ci = g.in_channels, co = g.out_channels;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x)
        for (std::size_t o = 0; o < co; ++o) {
          double sum = bias[o];
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const auto iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
              const auto ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
              if (!inside(g, iy, ix)) continue;
              for (std::size_t c = 0; c < ci; ++c)
                sum += static_cast<double>(input[((n * g.height + iy) * g.width + ix) * ci + c]) *
                       kernel[((ky * 3 + kx) * ci + c) * co + o];
            }
          output[((n * g.height + y) * g.width + x) * co + o] = static_cast<real>(sum);
        }
}

void conv2d_backward(const ConvGeometry& g, const real* input, const real* kernel,
                     const real* out_grad, real* input_grad, real* kernel_grad,
                     real* bias_grad) {
  const std::size_t ci = g.in_channels, co = g.out_channels;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x)
        for (std::size_t o = 0; o < co; ++o) {
          const real go = out_grad[((n * g.height + y) * g.width + x) * co + o];
          if (bias_grad) bias_grad[o] += go;
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const auto iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
              const auto ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
              if (!inside(g, iy, ix)) continue;
              for (std::size_t c = 0; c < ci; ++c) {
                const std::size_t in_idx = ((n * g.height + iy) * g.width + ix) * ci + c;
                const std::size_t k_idx = ((ky * 3 + kx) * ci + c) * co + o;
                if (input_grad) input_grad[in_idx] += go * kernel[k_idx];
                if (kernel_grad) kernel_grad[k_idx] += go * input[in_idx];
              }
            }
        }
}

void maxpool2x2_forward(std::size_t batch, std::size_t height, std::size_t width,
                        std::size_t channels, const real* input, real* output) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t oy = 0; oy < height / 2; ++oy)
      for (std::size_t ox = 0; ox < width / 2; ++ox)
        for (std::size_t c = 0; c < channels; ++c) {
          real best = -std::numeric_limits<real>::infinity();
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              best = std::max(best, input[((n * height + 2 * oy + dy) * width + 2 * ox + dx) *
                                              channels + c]);
          output[((n * (height / 2) + oy) * (width / 2) + ox) * channels + c] = best;
        }
}

}  // namespace gatta::kernels::reference
