#include "featureness/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace featureness {

namespace {

float smoothstep(float t) { return t * t * (3.0f - 2.0f * t); }

// Single octave of value noise: random lattice values, smooth bilinear blend.
void add_value_noise(Image& img, Rng& rng, int cell, float amplitude) {
  const int gw = img.width / cell + 2;
  const int gh = img.height / cell + 2;
  std::vector<float> grid(static_cast<size_t>(gw) * gh);
  for (auto& g : grid) g = static_cast<float>(rng.uniform());

  for (int y = 0; y < img.height; ++y) {
    const int gy = y / cell;
    const float fy = smoothstep(float(y % cell) / cell);
    for (int x = 0; x < img.width; ++x) {
      const int gx = x / cell;
      const float fx = smoothstep(float(x % cell) / cell);
      const float v00 = grid[gy * gw + gx];
      const float v01 = grid[gy * gw + gx + 1];
      const float v10 = grid[(gy + 1) * gw + gx];
      const float v11 = grid[(gy + 1) * gw + gx + 1];
      const float top = v00 + fx * (v01 - v00);
      const float bot = v10 + fx * (v11 - v10);
      img.at(y, x) += amplitude * (top + fy * (bot - top));
    }
  }
}

void add_random_triangle(Image& img, Rng& rng) {
  double px[3], py[3];
  for (int i = 0; i < 3; ++i) {
    px[i] = rng.uniform(0.0, img.width);
    py[i] = rng.uniform(0.0, img.height);
  }
  const float delta = static_cast<float>(rng.uniform(-0.5, 0.5));

  const int x0 = std::max(0, int(std::floor(std::min({px[0], px[1], px[2]}))));
  const int x1 = std::min(img.width - 1, int(std::ceil(std::max({px[0], px[1], px[2]}))));
  const int y0 = std::max(0, int(std::floor(std::min({py[0], py[1], py[2]}))));
  const int y1 = std::min(img.height - 1, int(std::ceil(std::max({py[0], py[1], py[2]}))));

  auto edge = [&](int i, int j, double x, double y) {
    return (px[j] - px[i]) * (y - py[i]) - (py[j] - py[i]) * (x - px[i]);
  };
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double e0 = edge(0, 1, x, y);
      const double e1 = edge(1, 2, x, y);
      const double e2 = edge(2, 0, x, y);
      const bool inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      if (inside) img.at(y, x) += delta;
    }
  }
}

}  // namespace

Image gen_texture_image(Rng& rng, int height, int width) {
  if (height < 32 || width < 32) {
    throw std::invalid_argument("gen_texture_image: minimum size is 32x32");
  }
  Image img(height, width, 0.0f);

  // Octaves from coarse structure down to pixel-scale detail.
  float amplitude = 1.0f;
  for (int cell = std::min(width, height) / 2; cell >= 2; cell /= 2) {
    add_value_noise(img, rng, cell, amplitude);
    amplitude *= 0.55f;
  }

  const int n_triangles = 2 + static_cast<int>(rng.uniform_index(4));
  for (int i = 0; i < n_triangles; ++i) add_random_triangle(img, rng);

  // Linear gradient with random direction.
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  const float gscale = static_cast<float>(rng.uniform(0.0, 0.4));
  const double gx = std::cos(angle) / width, gy = std::sin(angle) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.at(y, x) += gscale * static_cast<float>(gx * x + gy * y);
    }
  }

  // Full-range contrast stretch.
  const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
  const float lo = *mn, hi = *mx;
  const float range = std::max(hi - lo, 1e-6f);
  for (auto& v : img.data) v = (v - lo) / range;
  return img;
}

TrainingPair gen_pair(Rng& rng, const Image& img, const HomographyBounds& bounds,
                      const PhotometricConfig& photometric) {
  TrainingPair pair;
  pair.img_a = img;
  pair.h_ab = sample_homography(rng, bounds, img.width, img.height);
  auto [warped, mask] = warp_image(img, pair.h_ab, img.width, img.height);
  pair.valid_b = std::move(mask);

  const float gain = 1.0f + static_cast<float>(rng.uniform(-photometric.contrast, photometric.contrast));
  const float bias = static_cast<float>(rng.uniform(-photometric.brightness, photometric.brightness));
  for (int y = 0; y < warped.height; ++y) {
    for (int x = 0; x < warped.width; ++x) {
      if (!pair.valid_b.at(y, x)) continue;
      float v = warped.at(y, x) * gain + bias;
      if (photometric.noise_sigma > 0.0) {
        v += static_cast<float>(rng.normal(0.0, photometric.noise_sigma));
      }
      warped.at(y, x) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  pair.img_b = std::move(warped);
  return pair;
}

}  // namespace featureness
