#include "mivolo/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mivolo {

BBox intersect(const BBox& a, const BBox& b) {
  return {std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
}

BBox clamp_to(const BBox& box, int width, int height) {
  return {std::clamp(box.x0, 0, width), std::clamp(box.y0, 0, height), std::clamp(box.x1, 0, width),
          std::clamp(box.y1, 0, height)};
}

Image::Image(int w, int h, double fill)
    : width(w), height(h), data(3 * static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {}

Image::Image(int w, int h, const std::array<double, 3>& fill) : Image(w, h) {
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (int c = 0; c < 3; ++c)
    std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, fill[c]);
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

int parse_int(const std::string& tok, const std::string& path) {
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw InputError("malformed PPM header in " + path);
  }
}

}  // namespace

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path);
  const std::string magic = next_token(in);
  if (magic != "P6" && magic != "P3") throw InputError(path + " is not a P3/P6 portable pixmap");
  const int w = parse_int(next_token(in), path);
  const int h = parse_int(next_token(in), path);
  const int maxval = parse_int(next_token(in), path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw InputError("unsupported PPM geometry or depth in " + path);
  Image img(w, h);
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      int v;
      if (magic == "P6") {
        char byte;
        if (!in.get(byte)) throw InputError("truncated pixel data in " + path);
        v = static_cast<unsigned char>(byte);
      } else {
        v = parse_int(next_token(in), path);
      }
      img.data[c * plane + i] = static_cast<double>(v) / maxval;
    }
  }
  return img;
}

void save_ppm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(image.data[c * plane + i], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
}

Image crop(const Image& image, const BBox& box) {
  const BBox b = clamp_to(box, image.width, image.height);
  if (!b.valid()) throw InputError("crop box lies outside the image");
  Image out(b.width(), b.height());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < b.height(); ++y)
      for (int x = 0; x < b.width(); ++x) out.at(c, y, x) = image.at(c, b.y0 + y, b.x0 + x);
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  return out;
}

Image resize_bilinear(const Image& image, int out_w, int out_h) {
  if (image.empty() || out_w <= 0 || out_h <= 0) throw InputError("resize of an empty image");
  Image out(out_w, out_h);
  const double sx = static_cast<double>(image.width) / out_w;
  const double sy = static_cast<double>(image.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const double bottom = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

Letterboxed letterbox(const Image& image, int target, const std::array<double, 3>& fill) {
  if (image.empty()) throw InputError("letterbox of an empty crop");
  if (target <= 0) throw InputError("letterbox target must be positive");
  const double s = static_cast<double>(target) / std::max(image.width, image.height);
  const int w = std::clamp(static_cast<int>(std::lround(image.width * s)), 1, target);
  const int h = std::clamp(static_cast<int>(std::lround(image.height * s)), 1, target);
  const Image resized = (w == image.width && h == image.height) ? image : resize_bilinear(image, w, h);
  Letterboxed out{Image(target, target, fill), {}};
  const int ox = (target - w) / 2, oy = (target - h) / 2;
  out.content = {ox, oy, ox + w, oy + h};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.image.at(c, oy + y, ox + x) = resized.at(c, y, x);
  return out;
}

Tensor normalize_channels(const Image& image, const std::array<double, 3>& mean,
                          const std::array<double, 3>& std) {
  if (image.empty()) throw InputError("normalize of an empty image");
  std::vector<double> values(image.data.size());
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      values[c * plane + i] = (image.data[c * plane + i] - mean[c]) / std[c];
  return Tensor({3, static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)},
                std::move(values));
}

}  // namespace mivolo
