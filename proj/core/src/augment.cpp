#include "asd/augment.hpp"

#include <stdexcept>

namespace asd {

CropFlip draw_crop_flip(Rng& rng, int pad) {
  CropFlip d;
  d.dy = static_cast<int>(uniform_below(rng, static_cast<std::uint32_t>(2 * pad + 1)));
  d.dx = static_cast<int>(uniform_below(rng, static_cast<std::uint32_t>(2 * pad + 1)));
  d.flip = uniform01(rng) < 0.5;
  return d;
}

Image apply_crop_flip(const Image& image, const CropFlip& draw, int pad) {
  if (draw.dy < 0 || draw.dy > 2 * pad || draw.dx < 0 || draw.dx > 2 * pad)
    throw std::runtime_error("crop offset outside padded range");
  Image out = make_image(image.channels, image.height, image.width);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      const int sy = y + draw.dy - pad;
      if (sy < 0 || sy >= image.height) continue;  // zero padding
      for (int x = 0; x < image.width; ++x) {
        const int ox = draw.flip ? image.width - 1 - x : x;
        const int sx = x + draw.dx - pad;
        if (sx < 0 || sx >= image.width) continue;
        out.at(c, y, ox) = image.at(c, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace asd
