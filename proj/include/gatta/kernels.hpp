#pragma once

// Data-parallel numeric kernels. Every kernel partitions work over disjoint
// outputs and keeps a fixed summation order per output element, so results
// are bit-identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

#include "gatta/real.hpp"

namespace gatta::kernels {

enum class Trans : bool { no = false, yes = true };

/// C[m,n] = beta*C + op(A)[m,k] * op(B)[k,n], all row-major.
/// lda/ldb/ldc are the row strides of the stored (untransposed) matrices.
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, std::size_t lda, const real* b, std::size_t ldb, real beta,
          real* c, std::size_t ldc);

/// NHWC geometry of a 3x3, stride-1, same-padded convolution.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  std::size_t rows() const { return batch * height * width; }
  std::size_t patch() const { return 9 * in_channels; }
};

/// Unfolds input [b,h,w,c] into columns [b*h*w, 9*c] (ky, kx, c order).
void im2col3x3(const ConvGeometry& g, const real* input, real* cols);
/// Adds columns [b*h*w, 9*c] back onto input-gradient [b,h,w,c].
void col2im3x3(const ConvGeometry& g, const real* cols, real* input_grad);

void conv2d_forward(const ConvGeometry& g, const real* input, const real* kernel,
                    const real* bias, real* output, real* cols_scratch);

/// out[j] += sum_i rows[i, j] over a [n_rows, n_cols] matrix.
void column_sums(std::size_t n_rows, std::size_t n_cols, const real* rows, real* out);

/// Non-overlapping 2x2 max pooling on [b,h,w,c]. argmax holds the flat input
/// index chosen for each output (first in row-major window order on ties).
void maxpool2x2_forward(std::size_t batch, std::size_t height, std::size_t width,
                        std::size_t channels, const real* input, real* output,
                        std::uint32_t* argmax);
void maxpool2x2_backward(std::size_t n_out, const real* out_grad,
                         const std::uint32_t* argmax, real* input_grad);

/// Serial, loop-literal versions of the kernels above, kept as test oracles
/// and as the benchmark baseline.
namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, std::size_t lda, const real* b, std::size_t ldb, real beta,
          real* c, std::size_t ldc);

void conv2d_forward(const ConvGeometry& g, const real* input, const real* kernel,
                    const real* bias, real* output);

/// Gradients of a direct convolution; any output pointer may be null.
void conv2d_backward(const ConvGeometry& g, const real* input, const real* kernel,
                     const real* out_grad, real* input_grad, real* kernel_grad,
                     real* bias_grad);

void maxpool2x2_forward(std::size_t batch, std::size_t height, std::size_t width,
                        std::size_t channels, const real* input, real* output);

}  // namespace reference

/// Process-wide setup for entry points: applies GATTA_THREADS (if set) to the
/// OpenMP runtime and keeps large tensor buffers on the heap instead of fresh
/// mmap regions, which otherwise page-fault on every allocation. Returns the
/// thread cap.
int configure_runtime();

}  // namespace gatta::kernels
