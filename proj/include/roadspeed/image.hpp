#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "roadspeed/errors.hpp"

namespace roadspeed {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(Rgb, Rgb) = default;
};

/// Row-major raster. Pixel (x, y) has its center at continuous coordinate (x, y).
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0)
      fail(ErrorKind::ShapeError, "image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  std::size_t size() const { return pixels_.size(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return pixels_[index(x, y)]; }
  const T& operator()(int x, int y) const { return pixels_[index(x, y)]; }

  /// Clamp-to-edge access.
  const T& at_clamped(int x, int y) const {
    return (*this)(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  std::vector<T>& pixels() { return pixels_; }
  const std::vector<T>& pixels() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

using RgbImage = Image<Rgb>;
using GrayImage = Image<std::uint8_t>;
using FloatImage = Image<float>;
using Mask = Image<std::uint8_t>;  // 0 / 1

inline float luma(Rgb p) { return 0.299f * p.r + 0.587f * p.g + 0.114f * p.b; }

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline GrayImage to_gray(const RgbImage& img) {
  GrayImage out(img.width(), img.height());
  std::transform(img.pixels().begin(), img.pixels().end(), out.pixels().begin(),
                 [](Rgb p) { return to_u8(luma(p)); });
  return out;
}

inline RgbImage to_rgb(const GrayImage& img) {
  RgbImage out(img.width(), img.height());
  std::transform(img.pixels().begin(), img.pixels().end(), out.pixels().begin(),
                 [](std::uint8_t v) { return Rgb{v, v, v}; });
  return out;
}

/// Bilinear sample with clamp-to-edge.
template <typename T>
double sample_bilinear(const Image<T>& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  const double v00 = img.at_clamped(x0, y0), v10 = img.at_clamped(x0 + 1, y0);
  const double v01 = img.at_clamped(x0, y0 + 1), v11 = img.at_clamped(x0 + 1, y0 + 1);
  return (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
}

// ---- PNM (P5 / P6) -------------------------------------------------------

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  int v = 0;
  if (!(in >> v)) fail(ErrorKind::IoError, "malformed PNM header in " + path);
  return v;
}

}  // namespace detail

/// Reads binary PPM (P6) or PGM (P5); greylevel input is expanded to RGB.
inline RgbImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6" && magic != "P5") fail(ErrorKind::IoError, "unsupported image format in " + path.string());
  const int w = detail::read_pnm_int(in, path.string());
  const int h = detail::read_pnm_int(in, path.string());
  const int maxval = detail::read_pnm_int(in, path.string());
  if (w <= 0 || h <= 0 || maxval != 255) fail(ErrorKind::IoError, "unsupported PNM header in " + path.string());
  in.get();
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<char> buf(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) fail(ErrorKind::IoError, "truncated image " + path.string());
  RgbImage img(w, h);
  auto& px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (channels == 3) {
      px[i] = {static_cast<std::uint8_t>(buf[3 * i]), static_cast<std::uint8_t>(buf[3 * i + 1]),
               static_cast<std::uint8_t>(buf[3 * i + 2])};
    } else {
      const auto v = static_cast<std::uint8_t>(buf[i]);
      px[i] = {v, v, v};
    }
  }
  return img;
}

inline GrayImage read_pgm(const std::filesystem::path& path) { return to_gray(read_pnm(path)); }

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<char> buf(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    buf[3 * i] = static_cast<char>(img.pixels()[i].r);
    buf[3 * i + 1] = static_cast<char>(img.pixels()[i].g);
    buf[3 * i + 2] = static_cast<char>(img.pixels()[i].b);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels().data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace roadspeed
