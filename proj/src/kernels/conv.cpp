#include <algorithm>
#include <cstring>

#include "gatta/kernels.hpp"

namespace gatta::kernels {

void im2col3x3(const ConvGeometry& g, const real* input, real* cols) {
  const std::size_t c = g.in_channels;
  const std::size_t lines = g.batch * g.height;
#pragma omp parallel for schedule(static)
  for (std::size_t line = 0; line < lines; ++line) {
    const std::size_t n = line / g.height;
    const std::size_t y = line % g.height;
    const real* image = input + n * g.height * g.width * c;
    for (std::size_t x = 0; x < g.width; ++x) {
      real* dst = cols + (line * g.width + x) * g.patch();
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
        for (std::size_t kx = 0; kx < 3; ++kx, dst += c) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
              ix >= static_cast<std::ptrdiff_t>(g.width)) {
            std::fill_n(dst, c, real(0));
          } else {
            std::memcpy(dst, image + (iy * g.width + ix) * c, c * sizeof(real));
          }
        }
      }
    }
  }
}

void col2im3x3(const ConvGeometry& g, const real* cols, real* input_grad) {
  const std::size_t c = g.in_channels;
  const std::size_t hw = g.height * g.width;
#pragma omp parallel for schedule(static)
  for (std::size_t n = 0; n < g.batch; ++n) {
    real* image = input_grad + n * hw * c;
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const real* src = cols + ((n * g.height + y) * g.width + x) * g.patch();
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          for (std::size_t kx = 0; kx < 3; ++kx, src += c) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                ix >= static_cast<std::ptrdiff_t>(g.width))
              continue;
            real* dst = image + (iy * g.width + ix) * c;
#pragma omp simd
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const real* input, const real* kernel,
                    const real* bias, real* output, real* cols_scratch) {
  im2col3x3(g, input, cols_scratch);
  gemm(Trans::no, Trans::no, g.rows(), g.out_channels, g.patch(), cols_scratch, g.patch(),
       kernel, g.out_channels, real(0), output, g.out_channels);
  const std::size_t rows = g.rows();
  const std::size_t co = g.out_channels;
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
#pragma omp simd
    for (std::size_t j = 0; j < co; ++j) output[r * co + j] += bias[j];
  }
}

void column_sums(std::size_t n_rows, std::size_t n_cols, const real* rows, real* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    const real* row = rows + r * n_cols;
#pragma omp simd
    for (std::size_t j = 0; j < n_cols; ++j) out[j] += row[j];
  }
}

void maxpool2x2_forward(std::size_t batch, std::size_t height, std::size_t width,
                        std::size_t channels, const real* input, real* output,
                        std::uint32_t* argmax) {
  const std::size_t oh = height / 2;
  const std::size_t ow = width / 2;
  const std::size_t lines = batch * oh;
#pragma omp parallel for schedule(static)
  for (std::size_t line = 0; line < lines; ++line) {
    const std::size_t n = line / oh;
    const std::size_t oy = line % oh;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::size_t out_base = ((n * oh + oy) * ow + ox) * channels;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        std::size_t best = ((n * height + 2 * oy) * width + 2 * ox) * channels + ch;
        real best_value = input[best];
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx =
                ((n * height + 2 * oy + dy) * width + 2 * ox + dx) * channels + ch;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        output[out_base + ch] = best_value;
        argmax[out_base + ch] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool2x2_backward(std::size_t n_out, const real* out_grad,
                         const std::uint32_t* argmax, real* input_grad) {
  // Windows are disjoint, so each input slot receives at most one write.
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n_out; ++i) input_grad[argmax[i]] += out_grad[i];
}

}  // namespace gatta::kernels
