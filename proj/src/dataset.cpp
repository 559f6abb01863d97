#include "gatta/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gatta/error.hpp"
#include "gatta/rng.hpp"

namespace gatta {

namespace {
constexpr std::size_t kSide = 32;
constexpr std::size_t kChannels = 3;
constexpr std::size_t kPixels = kSide * kSide * kChannels;
}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

void ImageDataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset: empty split");
  if (images.shape() != Shape{labels.size(), kSide, kSide, kChannels})
    throw std::invalid_argument("dataset: images " + shape_str(images.shape()) + " do not match " +
                                std::to_string(labels.size()) + " labels of 32x32x3");
  for (int label : labels)
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
      throw std::invalid_argument("dataset: label " + std::to_string(label) + " out of range");
  for (real v : images.data())
    if (!(v >= real(0) && v <= real(1))) throw std::invalid_argument("dataset: pixel outside [0,1]");
}

ImageDataset load_cifar_file(const std::filesystem::path& path, CifarVariant variant, Split split,
                             std::size_t expected_records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t record = cifar_record_bytes(variant);
  if (bytes.empty() || bytes.size() % record != 0)
    throw IoError(path.string() + ": truncated file (" + std::to_string(bytes.size()) +
                  " bytes is not a multiple of " + std::to_string(record) + ")");
  const std::size_t n = bytes.size() / record;
  if (expected_records != 0 && n != expected_records)
    throw IoError(path.string() + ": expected " + std::to_string(expected_records) +
                  " records, found " + std::to_string(n));

  ImageDataset data;
  data.num_classes = static_cast<std::size_t>(variant);
  data.split = split;
  data.images = Tensor({n, kSide, kSide, kChannels});
  data.labels.resize(n);
  const std::size_t label_bytes = record - kCifarImageBytes;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * record;
    const int label = rec[label_bytes - 1];
    if (static_cast<std::size_t>(label) >= data.num_classes)
      throw IoError(path.string() + ": label " + std::to_string(label) + " out of range");
    data.labels[i] = label;
    const unsigned char* planes = rec + label_bytes;
    real* image = data.images.raw() + i * kPixels;
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t p = 0; p < kSide * kSide; ++p)
        image[p * kChannels + c] = static_cast<real>(planes[c * kSide * kSide + p]) / real(255);
  }
  return data;
}

namespace {

ImageDataset concat(std::vector<ImageDataset> parts) {
  ImageDataset out;
  out.num_classes = parts.front().num_classes;
  out.split = parts.front().split;
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  out.images = Tensor({n, kSide, kSide, kChannels});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.images.data().begin(), p.images.data().end(), out.images.raw() + offset * kPixels);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    offset += p.size();
  }
  return out;
}

}  // namespace

std::pair<ImageDataset, ImageDataset> load_cifar(const std::filesystem::path& dir,
                                                 CifarVariant variant) {
  if (variant == CifarVariant::cifar10) {
    std::vector<ImageDataset> train;
    for (int i = 1; i <= 5; ++i)
      train.push_back(load_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), variant,
                                      Split::train, 10000));
    return {concat(std::move(train)),
            load_cifar_file(dir / "test_batch.bin", variant, Split::test, 10000)};
  }
  return {load_cifar_file(dir / "train.bin", variant, Split::train, 50000),
          load_cifar_file(dir / "test.bin", variant, Split::test, 10000)};
}

void write_cifar_file(const std::filesystem::path& path, const ImageDataset& data,
                      CifarVariant variant) {
  const std::size_t record = cifar_record_bytes(variant);
  std::vector<unsigned char> bytes(data.size() * record, 0);
  const std::size_t label_bytes = record - kCifarImageBytes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    unsigned char* rec = bytes.data() + i * record;
    rec[label_bytes - 1] = static_cast<unsigned char>(data.labels[i]);
    const real* image = data.images.raw() + i * kPixels;
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t p = 0; p < kSide * kSide; ++p) {
        const double v = std::clamp(static_cast<double>(image[p * kChannels + c]), 0.0, 1.0);
        rec[label_bytes + c * kSide * kSide + p] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

struct Bar {
  double cx, cy, angle_rad, half_length, half_width;
  double color[3];
};

// Soft-edged segment: full intensity inside, linear falloff over one pixel.
double bar_coverage(const Bar& bar, double x, double y) {
  const double dx = x - bar.cx, dy = y - bar.cy;
  const double c = std::cos(bar.angle_rad), s = std::sin(bar.angle_rad);
  const double along = std::abs(dx * c + dy * s) - bar.half_length;
  const double across = std::abs(-dx * s + dy * c) - bar.half_width;
  const double outside = std::max(along, across);
  return std::clamp(0.5 - outside, 0.0, 1.0);
}

void paint(real* image, const Bar& bar) {
  for (std::size_t y = 0; y < kSide; ++y)
    for (std::size_t x = 0; x < kSide; ++x) {
      const double cov = bar_coverage(bar, x + 0.5, y + 0.5);
      if (cov <= 0.0) continue;
      real* px = image + (y * kSide + x) * kChannels;
      for (std::size_t ch = 0; ch < kChannels; ++ch)
        px[ch] = static_cast<real>((1.0 - cov) * px[ch] + cov * bar.color[ch]);
    }
}

}  // namespace

ImageDataset synthetic_dataset(std::size_t n, std::size_t num_classes, std::uint64_t seed,
                               Split split) {
  if (num_classes < 2) throw std::invalid_argument("synthetic: need at least two classes");
  if (n < num_classes) throw std::invalid_argument("synthetic: n must be >= number of classes");
  constexpr double kPi = 3.14159265358979323846;

  ImageDataset data;
  data.num_classes = num_classes;
  data.split = split;
  data.images = Tensor({n, kSide, kSide, kChannels});
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % num_classes);
    data.labels[i] = label;
    Rng rng(derive_seed(seed, 0x5E7, i));
    real* image = data.images.raw() + i * kPixels;

    // Background: tinted gray with a gentle linear gradient.
    const double base = uniform(rng, 0.3, 0.45);
    double tint[3];
    for (double& t : tint) t = uniform(rng, -0.04, 0.04);
    const double gx = uniform(rng, -0.004, 0.004), gy = uniform(rng, -0.004, 0.004);
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 0; x < kSide; ++x)
        for (std::size_t ch = 0; ch < kChannels; ++ch)
          image[(y * kSide + x) * kChannels + ch] =
              static_cast<real>(base + tint[ch] + gx * (x - 15.5) + gy * (y - 15.5));

    // Distractors: shorter bars at arbitrary orientations.
    const int distractors = 2 + static_cast<int>(rng() % 2);
    for (int k = 0; k < distractors; ++k) {
      Bar d{uniform(rng, 6, 26), uniform(rng, 6, 26), uniform(rng, 0, kPi), uniform(rng, 4, 7),
            uniform(rng, 0.8, 1.4), {}};
      const double lift = uniform(rng, 0.1, 0.4);
      for (double& c : d.color) c = base + lift + uniform(rng, -0.08, 0.08);
      paint(image, d);
    }

    // Class bar.
    const double angle = (static_cast<double>(label) / num_classes + uniform(rng, -0.06, 0.06)) * kPi;
    Bar bar{16 + uniform(rng, -1.5, 1.5), 16 + uniform(rng, -1.5, 1.5), angle, uniform(rng, 9, 12),
            uniform(rng, 1.0, 1.8), {}};
    const double lift = uniform(rng, 0.04, 0.4);
    for (double& c : bar.color) c = base + lift + uniform(rng, -0.08, 0.08);
    paint(image, bar);

    for (std::size_t p = 0; p < kPixels; ++p) {
      const double v = image[p] + 0.1 * standard_normal(rng);
      image[p] = static_cast<real>(std::clamp(v, 0.0, 1.0));
    }
  }
  return data;
}

ImageDataset subset(const ImageDataset& data, std::span<const std::size_t> indices, Split split) {
  ImageDataset out;
  out.num_classes = data.num_classes;
  out.split = split;
  out.images = gather_images(data, indices);
  out.labels = gather_labels(data, indices);
  return out;
}

ImageDataset take_random(const ImageDataset& data, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x7A4E));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(n, order.size()));
  return subset(data, order, data.split);
}

std::pair<ImageDataset, ImageDataset> split_holdout(const ImageDataset& data, double fraction,
                                                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_holdout: fraction must lie in (0,1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5B17));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * data.size()));
  if (n_val == 0 || n_val >= data.size())
    throw std::invalid_argument("split_holdout: split leaves an empty side");
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train(order.begin() + n_val, order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {subset(data, train, Split::train), subset(data, val, Split::val)};
}

Tensor gather_images(const ImageDataset& data, std::span<const std::size_t> indices) {
  Tensor out({indices.size(), kSide, kSide, kChannels});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) throw std::out_of_range("gather_images: index out of range");
    std::memcpy(out.raw() + i * kPixels, data.images.raw() + indices[i] * kPixels,
                kPixels * sizeof(real));
  }
  return out;
}

std::vector<int> gather_labels(const ImageDataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) out.push_back(data.labels.at(idx));
  return out;
}

}  // namespace gatta
