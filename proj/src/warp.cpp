#include "featureness/warp.hpp"

#include <cmath>

namespace featureness {

float bilinear_sample(const Image& img, double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  // Clamp so that exact right/bottom edge coordinates stay sampleable.
  if (x0 >= img.width - 1) x0 = img.width - 2;
  if (y0 >= img.height - 1) y0 = img.height - 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;
  const double fx = x - x0;
  const double fy = y - y0;
  const double v00 = img.at(y0, x0);
  const double v01 = img.at(y0, x0 + 1);
  const double v10 = img.at(y0 + 1, x0);
  const double v11 = img.at(y0 + 1, x0 + 1);
  const double top = v00 + fx * (v01 - v00);
  const double bot = v10 + fx * (v11 - v10);
  return static_cast<float>(top + fy * (bot - top));
}

std::pair<Image, ValidityMask> warp_image(const Image& img, const Homography& h,
                                          int out_width, int out_height) {
  Image out(out_height, out_width, 0.0f);
  ValidityMask mask(out_height, out_width, false);
  const Eigen::Matrix3d hinv = h.inverse().matrix();

  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Eigen::Vector3d q = hinv * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(q.z()) < 1e-12) continue;
      const double sx = q.x() / q.z();
      const double sy = q.y() / q.z();
      if (sx < 0.0 || sx > img.width - 1 || sy < 0.0 || sy > img.height - 1) continue;
      out.at(y, x) = bilinear_sample(img, sx, sy);
      mask.at(y, x) = 1;
    }
  }
  return {std::move(out), std::move(mask)};
}

}  // namespace featureness
