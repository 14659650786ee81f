// SPDX-License-Identifier: Apache-2.0
#include "televit/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "televit/errors.hpp"

namespace televit {

Image::Image(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), pixels(w * h, fill) {}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (const Rgb& p : image.pixels) {
    const char bytes[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(bytes, 3);
  }
  if (!out) throw IoError("short write to " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || !in) throw DataError(path.string() + " is not an 8-bit P6 image");
  in.get();
  Image image(w, h);
  for (Rgb& p : image.pixels) {
    char bytes[3];
    if (!in.read(bytes, 3)) throw DataError(path.string() + " is truncated");
    p = {static_cast<std::uint8_t>(bytes[0]), static_cast<std::uint8_t>(bytes[1]),
         static_cast<std::uint8_t>(bytes[2])};
  }
  return image;
}

Rgb gray(double v, double lo, double hi) {
  double u = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  u = std::clamp(u, 0.0, 1.0);
  const auto level = static_cast<std::uint8_t>(std::lround(u * 255.0));
  return {level, level, level};
}

Image render_field(std::span<const double> values, std::size_t rows, std::size_t cols, double lo,
                   double hi, std::span<const bool> mask, Rgb masked) {
  if (values.size() != rows * cols) throw DimensionError("render_field: value count does not match shape");
  if (!mask.empty() && mask.size() != values.size()) throw DimensionError("render_field: mask size mismatch");
  Image image(cols, rows);
  for (std::size_t i = 0; i < values.size(); ++i)
    image.pixels[i] = (!mask.empty() && !mask[i]) ? masked : gray(values[i], lo, hi);
  return image;
}

}  // namespace televit
