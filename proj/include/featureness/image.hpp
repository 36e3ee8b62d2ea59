#pragma once

#include <cstdint>
#include <vector>

namespace featureness {

/// Dense grayscale raster, row-major, intensities in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  bool inside(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
  size_t size() const { return data.size(); }
};

/// Interleaved RGB raster, channels in [0, 1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // 3 * height * width, r g b per pixel

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

/// Boolean per-pixel mask with the same shape as the image it annotates.
/// Used both for warp validity and for binary featureness masks.
struct PixelMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> flags;

  PixelMask() = default;
  PixelMask(int h, int w, bool fill = false)
      : height(h), width(w), flags(static_cast<size_t>(h) * w, fill ? 1 : 0) {}

  uint8_t& at(int y, int x) { return flags[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return flags[static_cast<size_t>(y) * width + x]; }

  size_t count() const {
    size_t n = 0;
    for (const uint8_t f : flags) n += f ? 1 : 0;
    return n;
  }
};

using ValidityMask = PixelMask;

/// Rec.601 luma conversion.
Image to_gray(const RgbImage& rgb);

}  // namespace featureness
