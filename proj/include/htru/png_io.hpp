#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htru/common.hpp"

namespace htru {

// 8-bit grayscale image, row-major. 255 is background (paper white),
// low values are ink.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, uint8_t fill = 255)
      : height(h), width(w),
        pixels(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {}

  uint8_t& at(int y, int x) { return pixels[(size_t)y * width + x]; }
  uint8_t at(int y, int x) const { return pixels[(size_t)y * width + x]; }
  bool empty() const { return height == 0 || width == 0; }
  bool operator==(const GrayImage& o) const = default;
};

void write_png_gray(const std::string& path, const GrayImage& img);
GrayImage read_png_gray(const std::string& path);

}  // namespace htru
