// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace televit {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  std::size_t width = 0, height = 0;
  std::vector<Rgb> pixels;  // row-major

  Image() = default;
  Image(std::size_t w, std::size_t h, Rgb fill = {});
  Rgb& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  const Rgb& at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// Binary P6 writer. Throws IoError when the file cannot be written.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Gray level of v in [lo, hi]; values outside are clamped.
Rgb gray(double v, double lo, double hi);

/// Grayscale rendering of a [rows, cols] field over a fixed range. Cells with
/// mask[i] == false are drawn in `masked`.
Image render_field(std::span<const double> values, std::size_t rows, std::size_t cols, double lo,
                   double hi, std::span<const bool> mask = {}, Rgb masked = {0, 0, 96});

}  // namespace televit
