#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace geoperc {

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int u, int v) { return &data[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const std::uint8_t* at(int u, int v) const {
    return &data[(static_cast<std::size_t>(v) * width + u) * 3];
  }
};

// Binary PPM (P6, maxval 255).
RgbImage load_ppm(const std::filesystem::path& file);
void save_ppm(const RgbImage& image, const std::filesystem::path& file);

}  // namespace geoperc
