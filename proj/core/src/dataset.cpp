#include "asd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace asd {

Image make_image(int channels, int height, int width, float fill) {
  Image img;
  img.channels = channels;
  img.height = height;
  img.width = width;
  img.data.assign(static_cast<std::size_t>(channels) * height * width, fill);
  return img;
}

namespace {

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Foreground mask for one class at integer center (cy,cx), radius r,
// stroke thickness t. Classes are geometric patterns so that shape, not
// color, carries the label.
bool shape_hit(int cls, int y, int x, int cy, int cx, int r, int t, int phase) {
  const int dy = y - cy;
  const int dx = x - cx;
  switch (cls) {
    case 0:  // horizontal bar
      return std::abs(dy) <= t;
    case 1:  // vertical bar
      return std::abs(dx) <= t;
    case 2:  // filled disk
      return dy * dy + dx * dx <= r * r;
    case 3: {  // ring
      const int d2 = dy * dy + dx * dx;
      const int ri = (6 * r) / 10;
      return d2 <= r * r && d2 >= ri * ri;
    }
    case 4:  // plus sign
      return (std::abs(dy) <= t || std::abs(dx) <= t) && std::abs(dy) <= r && std::abs(dx) <= r;
    case 5:  // diagonal stripe
      return std::abs(dy - dx) <= t;
    case 6:  // checkerboard tiles
      return (((y + phase) / 4 + (x + phase) / 4) % 2) == 0;
    case 7:  // upward triangle
      return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
    case 8:  // two squares side by side
      return std::abs(dy) <= t && (std::abs(dx - r) <= t || std::abs(dx + r) <= t);
    case 9:  // diamond
      return std::abs(dy) + std::abs(dx) <= r;
    default:
      return false;
  }
}

}  // namespace

LabeledDataset generate_synthetic(const SyntheticSpec& spec, bool test_split) {
  if (spec.class_count != 10) throw std::runtime_error("synthetic generator supports exactly 10 classes");
  const int n = test_split ? spec.test_size : spec.train_size;
  const int s = spec.image_size;
  Rng rng = make_stream(spec.seed, test_split ? "synthetic-test" : "synthetic-train");

  LabeledDataset ds;
  ds.class_count = spec.class_count;
  ds.images.reserve(static_cast<std::size_t>(n));
  ds.labels.reserve(static_cast<std::size_t>(n));

  // Balanced labels, shuffled once so class order carries no information.
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % spec.class_count;
  fisher_yates_shuffle(labels, rng);

  for (int i = 0; i < n; ++i) {
    const int cls = labels[static_cast<std::size_t>(i)];
    const bool hard = uniform01(rng) < spec.hard_fraction;

    // Per-sample parameter draws, in a fixed order.
    const int jitter = hard ? 8 : 4;
    const int cy = s / 2 - jitter + static_cast<int>(uniform_below(rng, static_cast<std::uint32_t>(2 * jitter + 1)));
    const int cx = s / 2 - jitter + static_cast<int>(uniform_below(rng, static_cast<std::uint32_t>(2 * jitter + 1)));
    const int r = 6 + static_cast<int>(uniform_below(rng, 5));
    const int t = 2 + static_cast<int>(uniform_below(rng, 3));
    const int phase = static_cast<int>(uniform_below(rng, 8));
    float fg[3], bg[3];
    for (int c = 0; c < 3; ++c) fg[c] = 0.55f + 0.45f * static_cast<float>(uniform01(rng));
    for (int c = 0; c < 3; ++c) bg[c] = 0.35f * static_cast<float>(uniform01(rng));
    const float sigma = hard ? 0.30f + 0.15f * static_cast<float>(uniform01(rng))
                             : 0.03f + 0.09f * static_cast<float>(uniform01(rng));

    Image img = make_image(3, s, s);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const bool hit = shape_hit(cls, y, x, cy, cx, r, t, phase);
        for (int c = 0; c < 3; ++c) {
          const float base = hit ? fg[c] : bg[c];
          const float noisy = base + sigma * static_cast<float>(sample_normal(rng));
          img.at(c, y, x) = clamp01(noisy);
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(cls);
  }
  return ds;
}

namespace {

void load_cifar10_batch(const std::string& path, LabeledDataset& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CIFAR-10 batch: " + path);
  constexpr int kPlane = 32 * 32;
  constexpr int kRecord = 1 + 3 * kPlane;
  std::vector<unsigned char> record(kRecord);
  while (in.read(reinterpret_cast<char*>(record.data()), kRecord)) {
    const int label = record[0];
    if (label < 0 || label > 9) throw std::runtime_error("corrupt CIFAR-10 label in " + path);
    Image img = make_image(3, 32, 32);
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < kPlane; ++p)
        img.data[static_cast<std::size_t>(c * kPlane + p)] =
            static_cast<float>(record[static_cast<std::size_t>(1 + c * kPlane + p)]) / 255.0f;
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  if (in.gcount() != 0) throw std::runtime_error("truncated CIFAR-10 batch: " + path);
}

}  // namespace

LabeledDataset load_cifar10(const std::string& root, bool test_split) {
  LabeledDataset ds;
  ds.class_count = 10;
  if (test_split) {
    load_cifar10_batch(root + "/test_batch.bin", ds);
  } else {
    for (int b = 1; b <= 5; ++b) {
      char name[32];
      std::snprintf(name, sizeof(name), "/data_batch_%d.bin", b);
      load_cifar10_batch(root + name, ds);
    }
  }
  return ds;
}

LabeledDataset stratified_subset(const LabeledDataset& full, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw std::runtime_error("subset fraction must be in (0,1]");
  Rng rng = make_stream(seed, "stratified-subset");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(full.class_count));
  for (std::size_t i = 0; i < full.size(); ++i)
    by_class[static_cast<std::size_t>(full.labels[i])].push_back(static_cast<int>(i));

  std::vector<int> keep;
  for (auto& bucket : by_class) {
    fisher_yates_shuffle(bucket, rng);
    const std::size_t take =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(bucket.size())));
    for (std::size_t i = 0; i < take && i < bucket.size(); ++i) keep.push_back(bucket[i]);
  }
  std::sort(keep.begin(), keep.end());

  LabeledDataset sub;
  sub.class_count = full.class_count;
  sub.images.reserve(keep.size());
  sub.labels.reserve(keep.size());
  for (int idx : keep) {
    sub.images.push_back(full.images[static_cast<std::size_t>(idx)]);
    sub.labels.push_back(full.labels[static_cast<std::size_t>(idx)]);
  }
  return sub;
}

}  // namespace asd
