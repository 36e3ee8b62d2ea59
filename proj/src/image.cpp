#include "featureness/image.hpp"

namespace featureness {

Image to_gray(const RgbImage& rgb) {
  Image out(rgb.height, rgb.width);
  const size_t n = static_cast<size_t>(rgb.height) * rgb.width;
  for (size_t i = 0; i < n; ++i) {
    const float r = rgb.data[i * 3 + 0];
    const float g = rgb.data[i * 3 + 1];
    const float b = rgb.data[i * 3 + 2];
    out.data[i] = 0.299f * r + 0.587f * g + 0.114f * b;
  }
  return out;
}

}  // namespace featureness
