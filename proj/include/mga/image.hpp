#pragma once

#include <filesystem>
#include <vector>

namespace mga::data {

// Planar (C×H×W) image with values in [0, 1]. Pixel (x, y) covers
// [x, x+1) × [y, y+1) in the coordinate frame landmarks use.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  bool empty() const { return pixels.empty(); }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  friend bool operator==(const Image&, const Image&) = default;
};

// Binary netpbm: P5 (1 channel) or P6 (3 channels), maxval 255.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& image);

// Rounds every value to the nearest k/255 after clamping to [0, 1].
void quantize8(Image& image);

Image flip_horizontal(const Image& image);
enum class Border { Clamp, Constant };

// Rotates content by `radians` about (cx, cy) with bilinear sampling; the
// same convention as geometry::rotate. Uncovered pixels repeat the nearest
// edge pixel (Clamp) or take `fill` (Constant).
Image rotate(const Image& image, double radians, double cx, double cy, Border border = Border::Clamp,
             double fill = 0.0);
// Bilinear resize with pixel-centre alignment.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

}  // namespace mga::data
