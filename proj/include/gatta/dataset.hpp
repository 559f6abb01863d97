#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gatta/tensor.hpp"

namespace gatta {

enum class Split { train, val, test };
const char* split_name(Split split);

/// Images [n,32,32,3] with pixels in [0,1]; labels in [0, num_classes).
struct ImageDataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  /// Throws std::invalid_argument if shapes, labels or pixel range are off.
  void validate() const;
};

enum class CifarVariant { cifar10 = 10, cifar100 = 100 };

constexpr std::size_t kCifarImageBytes = 3 * 32 * 32;
constexpr std::size_t cifar_record_bytes(CifarVariant v) {
  return v == CifarVariant::cifar10 ? 1 + kCifarImageBytes : 2 + kCifarImageBytes;
}

/// One CIFAR binary file: per record the label byte(s) then R, G, B planes of
/// 32x32 row-major bytes. CIFAR-100 uses the fine label. `expected_records`
/// of 0 accepts any whole number of records. Throws IoError on failure.
ImageDataset load_cifar_file(const std::filesystem::path& path, CifarVariant variant, Split split,
                             std::size_t expected_records = 0);

/// Standard directory layout: data_batch_{1..5}.bin + test_batch.bin (CIFAR-10)
/// or train.bin + test.bin (CIFAR-100).
std::pair<ImageDataset, ImageDataset> load_cifar(const std::filesystem::path& dir,
                                                 CifarVariant variant);

/// Writes `data` in the CIFAR binary layout (pixels rounded to bytes). For
/// CIFAR-100 the coarse label byte is written as 0.
void write_cifar_file(const std::filesystem::path& path, const ImageDataset& data,
                      CifarVariant variant);

/// Procedural 32x32 RGB classes: class k is a bar at orientation k*180/classes
/// degrees over a textured background with distractor bars and pixel noise.
/// Labels are round-robin, so classes are balanced to within one image.
ImageDataset synthetic_dataset(std::size_t n, std::size_t num_classes, std::uint64_t seed,
                               Split split = Split::train);

ImageDataset subset(const ImageDataset& data, std::span<const std::size_t> indices, Split split);

/// First `n` images of a seeded shuffle (class counts are not forced equal).
ImageDataset take_random(const ImageDataset& data, std::size_t n, std::uint64_t seed);

/// Seeded holdout: returns {train, val} with round(fraction * n) validation images.
std::pair<ImageDataset, ImageDataset> split_holdout(const ImageDataset& data, double fraction,
                                                    std::uint64_t seed);

/// Copies the listed images into a [b,32,32,3] batch.
Tensor gather_images(const ImageDataset& data, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const ImageDataset& data, std::span<const std::size_t> indices);

}  // namespace gatta
