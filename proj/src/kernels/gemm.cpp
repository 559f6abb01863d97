#include <algorithm>
#include <cstdlib>
#include <vector>

#include <malloc.h>
#include <omp.h>

#include "gatta/kernels.hpp"

namespace gatta::kernels {
namespace {

// Register tile. With AVX-512 float an NR=32 row is two vectors, so the
// accumulator block is 12 registers.
constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 32;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 120;
constexpr std::size_t kNc = 1024;

inline real load(const real* m, std::size_t ld, Trans t, std::size_t row, std::size_t col) {
  return t == Trans::no ? m[row * ld + col] : m[col * ld + row];
}

// Packs op(A)[i0:i0+mc, p0:p0+kc] into MR-row panels, zero padded.
void pack_a(Trans t, const real* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, real* out) {
  for (std::size_t ip = 0; ip < mc; ip += kMr) {
    const std::size_t rows = std::min(kMr, mc - ip);
    real* panel = out + (ip / kMr) * kc * kMr;
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t i = 0;
      for (; i < rows; ++i) panel[p * kMr + i] = load(a, lda, t, i0 + ip + i, p0 + p);
      for (; i < kMr; ++i) panel[p * kMr + i] = real(0);
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into NR-column panels, zero padded.
void pack_b(Trans t, const real* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, real* out) {
  const std::size_t panels = (nc + kNr - 1) / kNr;
#pragma omp parallel for schedule(static)
  for (std::size_t jp = 0; jp < panels; ++jp) {
    const std::size_t cols = std::min(kNr, nc - jp * kNr);
    real* panel = out + jp * kc * kNr;
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t j = 0;
      if (t == Trans::no) {
        const real* src = b + (p0 + p) * ldb + j0 + jp * kNr;
        for (; j < cols; ++j) panel[p * kNr + j] = src[j];
      } else {
        for (; j < cols; ++j) panel[p * kNr + j] = b[(j0 + jp * kNr + j) * ldb + p0 + p];
      }
      for (; j < kNr; ++j) panel[p * kNr + j] = real(0);
    }
  }
}

void micro_kernel(std::size_t kc, const real* __restrict ap, const real* __restrict bp,
                  real* __restrict c, std::size_t ldc, std::size_t mr, std::size_t nr) {
  real acc[kMr][kNr] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const real* brow = bp + p * kNr;
    const real* acol = ap + p * kMr;
    for (std::size_t i = 0; i < kMr; ++i) {
      const real av = acol[i];
#pragma omp simd
      for (std::size_t j = 0; j < kNr; ++j) acc[i][j] += av * brow[j];
    }
  }
  if (mr == kMr && nr == kNr) {
    for (std::size_t i = 0; i < kMr; ++i) {
#pragma omp simd
      for (std::size_t j = 0; j < kNr; ++j) c[i * ldc + j] += acc[i][j];
    }
    return;
  }
  for (std::size_t i = 0; i < mr; ++i)
    for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += acc[i][j];
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, std::size_t lda, const real* b, std::size_t ldb, real beta,
          real* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (beta == real(0)) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, real(0));
  } else if (beta != real(1)) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] *= beta;
  }
  if (k == 0) return;

  std::vector<real> packed_b(kKc * ((std::min(kNc, n) + kNr - 1) / kNr) * kNr);
  const std::size_t m_blocks = (m + kMc - 1) / kMc;

  for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
      const std::size_t kc = std::min(kKc, k - p0);
      pack_b(trans_b, b, ldb, p0, kc, j0, nc, packed_b.data());

#pragma omp parallel
      {
        std::vector<real> packed_a(kMc * kc);
#pragma omp for schedule(static)
        for (std::size_t ib = 0; ib < m_blocks; ++ib) {
          const std::size_t i0 = ib * kMc;
          const std::size_t mc = std::min(kMc, m - i0);
          pack_a(trans_a, a, lda, i0, mc, p0, kc, packed_a.data());
          for (std::size_t jr = 0; jr < nc; jr += kNr) {
            const real* bp = packed_b.data() + (jr / kNr) * kc * kNr;
            for (std::size_t ir = 0; ir < mc; ir += kMr) {
              micro_kernel(kc, packed_a.data() + (ir / kMr) * kc * kMr, bp,
                           c + (i0 + ir) * ldc + j0 + jr, ldc, std::min(kMr, mc - ir),
                           std::min(kNr, nc - jr));
            }
          }
        }
      }
    }
  }
}

int configure_runtime() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  if (const char* env = std::getenv("GATTA_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

}  // namespace gatta::kernels
