#include "featureness/keypoints.hpp"

#include <algorithm>
#include <cmath>

namespace featureness {

namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock: (dx, dy).
constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},
                                {2, 2},  {1, 3},  {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

// Greedy non-maximum suppression by descending score with deterministic ties.
std::vector<Keypoint> nms_keypoints(std::vector<Keypoint> kps, int radius, int top_n) {
  std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (radius <= 0 && top_n <= 0) return kps;

  std::vector<Keypoint> out;
  for (const Keypoint& kp : kps) {
    if (top_n > 0 && static_cast<int>(out.size()) >= top_n) break;
    bool blocked = false;
    if (radius > 0) {
      for (const Keypoint& acc : out) {
        if (std::abs(acc.x - kp.x) <= radius && std::abs(acc.y - kp.y) <= radius) {
          blocked = true;
          break;
        }
      }
    }
    if (!blocked) out.push_back(kp);
  }
  return out;
}

Image gaussian_smooth(const Image& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  Image tmp(img.height, img.width), out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int sx = std::clamp(x + i, 0, img.width - 1);
        acc += kernel[i + radius] * img.at(y, sx);
      }
      tmp.at(y, x) = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int sy = std::clamp(y + i, 0, img.height - 1);
        acc += kernel[i + radius] * tmp.at(sy, x);
      }
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace

std::vector<Keypoint> fast_detect(const Image& image, double threshold, int nms_radius) {
  std::vector<Keypoint> corners;
  for (int y = 3; y < image.height - 3; ++y) {
    for (int x = 3; x < image.width - 3; ++x) {
      const double center = image.at(y, x);
      const double hi = center + threshold;
      const double lo = center - threshold;

      double ring[16];
      for (int i = 0; i < 16; ++i) ring[i] = image.at(y + kCircle[i][1], x + kCircle[i][0]);

      // Longest circular run per polarity, capped at 16; at most one polarity
      // can reach 9 pixels, so the qualifying arc is unambiguous.
      for (const bool bright : {true, false}) {
        int best_len = 0, best_start = 0;
        int len = 0, start = 0;
        for (int i = 0; i < 32; ++i) {
          const int idx = i & 15;
          const bool pass = bright ? ring[idx] > hi : ring[idx] < lo;
          if (pass) {
            if (len == 0) start = i;
            if (++len > best_len) {
              best_len = len;
              best_start = start;
            }
            if (len == 16) break;
          } else {
            len = 0;
          }
        }
        if (best_len >= 9) {
          double score = 0.0;
          for (int i = 0; i < std::min(best_len, 16); ++i) {
            score += std::abs(ring[(best_start + i) & 15] - center);
          }
          corners.push_back({double(x), double(y), score});
          break;
        }
      }
    }
  }
  return nms_keypoints(std::move(corners), nms_radius, 0);
}

Image shi_tomasi_response(const Image& image, int window_half) {
  const int h = image.height, w = image.width;
  std::vector<double> gx(static_cast<size_t>(h) * w, 0.0), gy(gx), xx(gx), yy(gx), xy(gx);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      gx[i] = 0.5 * (image.at(y, x + 1) - image.at(y, x - 1));
      gy[i] = 0.5 * (image.at(y + 1, x) - image.at(y - 1, x));
      xx[i] = gx[i] * gx[i];
      yy[i] = gy[i] * gy[i];
      xy[i] = gx[i] * gy[i];
    }
  }

  // Integral images for O(1) window sums.
  auto integral = [&](const std::vector<double>& src) {
    std::vector<double> s(static_cast<size_t>(h + 1) * (w + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += src[static_cast<size_t>(y) * w + x];
        s[static_cast<size_t>(y + 1) * (w + 1) + x + 1] =
            s[static_cast<size_t>(y) * (w + 1) + x + 1] + row;
      }
    }
    return s;
  };
  const auto ixx = integral(xx), iyy = integral(yy), ixy = integral(xy);
  auto box = [&](const std::vector<double>& s, int y0, int x0, int y1, int x1) {
    return s[static_cast<size_t>(y1 + 1) * (w + 1) + x1 + 1] -
           s[static_cast<size_t>(y0) * (w + 1) + x1 + 1] -
           s[static_cast<size_t>(y1 + 1) * (w + 1) + x0] +
           s[static_cast<size_t>(y0) * (w + 1) + x0];
  };

  Image response(h, w, 0.0f);
  const int margin = window_half + 1;  // window must sit on valid gradients
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double sxx = box(ixx, y - window_half, x - window_half, y + window_half, x + window_half);
      const double syy = box(iyy, y - window_half, x - window_half, y + window_half, x + window_half);
      const double sxy = box(ixy, y - window_half, x - window_half, y + window_half, x + window_half);
      const double mean = 0.5 * (sxx + syy);
      const double diff = 0.5 * (sxx - syy);
      const double lmin = mean - std::sqrt(diff * diff + sxy * sxy);
      response.at(y, x) = static_cast<float>(std::max(0.0, lmin));
    }
  }
  return response;
}

std::vector<Keypoint> shi_tomasi(const Image& image, int window_half, int top_n,
                                 double min_quality) {
  if (window_half < 1) throw std::invalid_argument("shi_tomasi: window_half must be >= 1");
  const Image response = shi_tomasi_response(image, window_half);

  float max_response = 0.0f;
  for (const float r : response.data) max_response = std::max(max_response, r);
  if (max_response <= 0.0f) return {};
  const double floor = min_quality * max_response;

  std::vector<Keypoint> cands;
  for (int y = 1; y < image.height - 1; ++y) {
    for (int x = 1; x < image.width - 1; ++x) {
      const float r = response.at(y, x);
      if (r < floor || r <= 0.0f) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (response.at(y + dy, x + dx) > r) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) cands.push_back({double(x), double(y), r});
    }
  }
  return nms_keypoints(std::move(cands), 0, top_n);
}

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += __builtin_popcountll(a.bits[i] ^ b.bits[i]);
  return d;
}

BriefResult brief_describe(const Image& image, const std::vector<Keypoint>& kps,
                           uint64_t pattern_seed) {
  // Fixed sampling pattern, drawn once per seed.
  struct PatternPair {
    int x1, y1, x2, y2;
  };
  std::vector<PatternPair> pattern(256);
  Rng rng(pattern_seed);
  for (auto& p : pattern) {
    auto draw = [&]() {
      const double v = rng.normal(0.0, 6.5);
      return std::clamp(static_cast<int>(std::lround(v)), -15, 15);
    };
    p.x1 = draw();
    p.y1 = draw();
    p.x2 = draw();
    p.y2 = draw();
  }

  const Image smooth = gaussian_smooth(image, 2.0);

  BriefResult result;
  for (size_t i = 0; i < kps.size(); ++i) {
    const int cx = static_cast<int>(std::lround(kps[i].x));
    const int cy = static_cast<int>(std::lround(kps[i].y));
    if (cx < 16 || cx >= image.width - 16 || cy < 16 || cy >= image.height - 16) continue;
    BinaryDescriptor desc;
    for (int b = 0; b < 256; ++b) {
      const PatternPair& p = pattern[b];
      if (smooth.at(cy + p.y1, cx + p.x1) < smooth.at(cy + p.y2, cx + p.x2)) desc.set(b);
    }
    result.descriptors.push_back(desc);
    result.kept.push_back(static_cast<int>(i));
  }
  return result;
}

LearnedFeatures learned_detect_describe(const Model& model, const Image& image, int top_n,
                                        int nms_radius) {
  const DenseOutputs out = detector_infer(model, image);
  const auto peaks = nms_topk(out.prob, top_n, nms_radius);

  LearnedFeatures feats;
  feats.descriptors.resize(static_cast<Eigen::Index>(peaks.size()), out.desc.c);
  for (size_t i = 0; i < peaks.size(); ++i) {
    const auto [x, y] = peaks[i];
    feats.keypoints.push_back({double(x), double(y), out.prob.at(0, y, x)});
    for (int ci = 0; ci < out.desc.c; ++ci) {
      feats.descriptors(static_cast<Eigen::Index>(i), ci) = out.desc.at(ci, y, x);
    }
  }
  return feats;
}

}  // namespace featureness
