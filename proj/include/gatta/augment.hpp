#pragma once

#include <cstdint>

#include "gatta/tensor.hpp"

namespace gatta {

struct AugmentParams {
  double max_rotation_deg = 20.0;
  double max_shift_fraction = 0.2;
  double flip_probability = 0.5;
};

/// Per-image random transform of a [b,h,w,c] batch: rotation uniform in
/// +-max_rotation, independent x/y shifts uniform in +-max_shift of the size,
/// horizontal flip with flip_probability. Bilinear resampling with
/// nearest-edge fill; an exact zero rotation and integral shift copy pixels
/// without resampling. Image i draws from derive_seed(seed, first_index + i).
void augment(Tensor& batch, std::uint64_t seed, std::size_t first_index = 0,
             const AugmentParams& params = {});

/// Resamples one [h,w,c] image stored at `image` in place.
void transform_image(real* image, std::size_t height, std::size_t width, std::size_t channels,
                     double rotation_deg, double shift_x, double shift_y, bool flip);

/// Adds i.i.d. N(0, sigma^2) per value. Image i draws from
/// derive_seed(seed, first_index + i), so results do not depend on batching.
/// Values are clipped to [0,1] only when `clip` is set.
void add_gaussian_noise(Tensor& batch, double sigma, std::uint64_t seed,
                        std::size_t first_index = 0, bool clip = false);

}  // namespace gatta
