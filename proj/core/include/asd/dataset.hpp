#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asd/rng.hpp"

namespace asd {

/// Dense CHW pixel grid, values in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // size == channels*height*width, CHW order

  float& at(int c, int y, int x) { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
  float at(int c, int y, int x) const { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

Image make_image(int channels, int height, int width, float fill = 0.0f);

inline bool operator==(const Image& a, const Image& b) {
  return a.same_shape(b) && a.data == b.data;
}
inline bool operator!=(const Image& a, const Image& b) { return !(a == b); }

/// Plain labeled dataset: parallel image/label arrays.
struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return images.size(); }
};

struct SyntheticSpec {
  int train_size = 5000;
  int test_size = 1000;
  int class_count = 10;
  int image_size = 32;
  double hard_fraction = 0.1;  // heavily corrupted tail, deliberately hard to fit
  std::uint64_t seed = 1;
};

/// Procedural 10-class shape/texture dataset with the same geometry as
/// CIFAR-10 (3x32x32 float in [0,1]). Deterministic under the seed.
LabeledDataset generate_synthetic(const SyntheticSpec& spec, bool test_split);

/// CIFAR-10 binary-format loader (data_batch_*.bin / test_batch.bin).
LabeledDataset load_cifar10(const std::string& root, bool test_split);

/// Class-stratified subset: for each class, keep ceil(fraction * count)
/// samples chosen uniformly under the seed. fraction in (0,1].
LabeledDataset stratified_subset(const LabeledDataset& full, double fraction, std::uint64_t seed);

}  // namespace asd
