#include "gatta/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gatta/error.hpp"
#include "gatta/rng.hpp"

namespace gatta {

void transform_image(real* image, std::size_t height, std::size_t width, std::size_t channels,
                     double rotation_deg, double shift_x, double shift_y, bool flip) {
  const std::vector<real> src(image, image + height * width * channels);
  const double max_x = static_cast<double>(width - 1);
  const double max_y = static_cast<double>(height - 1);
  const double cx = max_x / 2.0, cy = max_y / 2.0;

  // Output pixel p samples the input at flip(rotate^-1(p - shift)).
  if (rotation_deg == 0.0 && shift_x == std::round(shift_x) && shift_y == std::round(shift_y)) {
    const auto sx = static_cast<std::ptrdiff_t>(shift_x);
    const auto sy = static_cast<std::ptrdiff_t>(shift_y);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        auto ix = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) - sx, 0, width - 1);
        const auto iy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) - sy, 0, height - 1);
        if (flip) ix = static_cast<std::ptrdiff_t>(width - 1) - ix;
        std::copy_n(src.data() + (iy * width + ix) * channels, channels,
                    image + (y * width + x) * channels);
      }
    return;
  }

  const double theta = rotation_deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double qx = x - shift_x - cx, qy = y - shift_y - cy;
      double rx = c * qx + s * qy + cx;
      const double ry = -s * qx + c * qy + cy;
      if (flip) rx = max_x - rx;
      const double fx = std::clamp(rx, 0.0, max_x), fy = std::clamp(ry, 0.0, max_y);
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const auto y0 = static_cast<std::size_t>(std::floor(fy));
      const std::size_t x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
      const double wx = fx - x0, wy = fy - y0;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        auto at = [&](std::size_t yy, std::size_t xx) { return static_cast<double>(src[(yy * width + xx) * channels + ch]); };
        const double top = (1 - wx) * at(y0, x0) + wx * at(y0, x1);
        const double bottom = (1 - wx) * at(y1, x0) + wx * at(y1, x1);
        image[(y * width + x) * channels + ch] = static_cast<real>((1 - wy) * top + wy * bottom);
      }
    }
}

void augment(Tensor& batch, std::uint64_t seed, std::size_t first_index, const AugmentParams& params) {
  if (batch.rank() != 4) throw std::invalid_argument("augment: batch must be [b,h,w,c]");
  const std::size_t b = batch.dim(0), h = batch.dim(1), w = batch.dim(2), c = batch.dim(3);
  const std::size_t stride = h * w * c;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < b; ++i) {
    Rng rng(derive_seed(seed, 0xA06, first_index + i));
    const double angle = uniform(rng, -params.max_rotation_deg, params.max_rotation_deg);
    const double sx = uniform(rng, -params.max_shift_fraction, params.max_shift_fraction) * w;
    const double sy = uniform(rng, -params.max_shift_fraction, params.max_shift_fraction) * h;
    const bool flip = uniform01(rng) < params.flip_probability;
    transform_image(batch.raw() + i * stride, h, w, c, angle, sx, sy, flip);
  }
}

void add_gaussian_noise(Tensor& batch, double sigma, std::uint64_t seed, std::size_t first_index,
                        bool clip) {
  if (!(sigma >= 0.0)) throw UsageError("noise sigma must be >= 0");
  if (sigma == 0.0 || batch.empty()) return;
  const std::size_t b = batch.dim(0);
  const std::size_t stride = batch.numel() / b;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < b; ++i) {
    Rng rng(derive_seed(seed, 0x7015E, first_index + i));
    real* px = batch.raw() + i * stride;
    for (std::size_t j = 0; j < stride; ++j) {
      double v = px[j] + sigma * standard_normal(rng);
      if (clip) v = std::clamp(v, 0.0, 1.0);
      px[j] = static_cast<real>(v);
    }
  }
}

}  // namespace gatta
