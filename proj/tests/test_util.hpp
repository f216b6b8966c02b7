#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "asd/dataset.hpp"

namespace asd::test {

/// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("asd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Deterministic filler image: value depends on every coordinate.
inline Image pattern_image(int channels, int height, int width, float scale = 1.0f) {
  Image img = make_image(channels, height, width);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        img.at(c, y, x) =
            scale * static_cast<float>((c * 31 + y * 7 + x * 3) % 97) / 96.0f;
  return img;
}

/// Balanced tiny dataset with pattern images (distinct per sample).
inline LabeledDataset tiny_dataset(int n, int class_count, int channels = 3, int side = 8) {
  LabeledDataset d;
  d.class_count = class_count;
  for (int i = 0; i < n; ++i) {
    Image img = pattern_image(channels, side, side);
    img.data[0] = static_cast<float>(i % 89) / 89.0f;  // make samples distinct
    img.data[1] = static_cast<float>(i / 89) / 89.0f;
    d.images.push_back(std::move(img));
    d.labels.push_back(i % class_count);
  }
  return d;
}

}  // namespace asd::test
