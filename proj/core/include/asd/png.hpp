#pragma once

#include <string>
#include <vector>

namespace asd {

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

/// Plain RGB raster with line/rect/text primitives (5x7 bitmap font).
class Canvas {
 public:
  Canvas(int width, int height, Rgb background);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<unsigned char>& pixels() const { return rgb_; }

  Rgb get(int x, int y) const;
  void set(int x, int y, Rgb color);
  void fill_rect(int x, int y, int w, int h, Rgb color);
  void line(int x0, int y0, int x1, int y1, Rgb color);
  void text(int x, int y, const std::string& s, Rgb color, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

 private:
  int width_, height_;
  std::vector<unsigned char> rgb_;
};

/// 8-bit RGB PNG via zlib.
void write_png(const std::string& path, const Canvas& canvas);

}  // namespace asd
