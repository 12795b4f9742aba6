#pragma once

#include <array>
#include <string>
#include <vector>

#include "mivolo/tensor.hpp"

namespace mivolo {

// Pixel box, half-open: covers x in [x0, x1), y in [y0, y1).
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return valid() ? 1LL * width() * height() : 0; }
  bool valid() const { return x1 > x0 && y1 > y0; }
  bool operator==(const BBox&) const = default;
};

BBox intersect(const BBox& a, const BBox& b);
BBox clamp_to(const BBox& box, int width, int height);

// Planar RGB image with channel values in [0, 1], stored [3 x H x W].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0);
  Image(int w, int h, const std::array<double, 3>& fill);

  bool empty() const { return width <= 0 || height <= 0; }
  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Binary P6 (maxval <= 255) and ASCII P3.
Image load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Image& image);

Image crop(const Image& image, const BBox& box);
Image flip_horizontal(const Image& image);
// Half-pixel-centre bilinear resampling.
Image resize_bilinear(const Image& image, int out_w, int out_h);

struct Letterboxed {
  Image image;
  BBox content;  // where the resized crop sits inside the square
};

// Long side resized to `target`, short side centred with `fill` bands.
Letterboxed letterbox(const Image& image, int target, const std::array<double, 3>& fill);

// Per-channel (x - mean) / std -> [3 x H x W] tensor.
Tensor normalize_channels(const Image& image, const std::array<double, 3>& mean,
                          const std::array<double, 3>& std);

}  // namespace mivolo
