#pragma once

#include "asd/dataset.hpp"
#include "asd/rng.hpp"

namespace asd {

/// One weak-augmentation draw: crop offset into the zero-padded image plus an
/// optional horizontal flip.
struct CropFlip {
  int dy = 0;  // in [0, 2*pad]
  int dx = 0;
  bool flip = false;
};

/// Draw order is fixed: dy, dx, then flip (probability 1/2).
CropFlip draw_crop_flip(Rng& rng, int pad);

/// Zero-pad by `pad` on every side, crop back to the original size at the
/// drawn offset, then flip horizontally if requested.
Image apply_crop_flip(const Image& image, const CropFlip& draw, int pad);

}  // namespace asd
