#pragma once

#include <array>
#include <cstdint>

#include "featureness/detector.hpp"
#include "featureness/featureness.hpp"

namespace featureness {

/// FAST-9 segment test: a pixel is a corner iff >= 9 contiguous pixels on its
/// 16-pixel Bresenham circle are all brighter than I(p) + t or all darker than
/// I(p) - t. Score is the sum of absolute differences over the qualifying arc.
/// nms_radius = 0 disables suppression (every corner is returned).
std::vector<Keypoint> fast_detect(const Image& image, double threshold, int nms_radius);

/// Shi-Tomasi: minimum eigenvalue of the structure tensor (central-difference
/// gradients, (2w+1)^2 window). Keeps local maxima above
/// min_quality * max_response, strongest top_n first.
std::vector<Keypoint> shi_tomasi(const Image& image, int window_half, int top_n,
                                 double min_quality);

/// Dense Shi-Tomasi response map (exposed for oracle comparison).
Image shi_tomasi_response(const Image& image, int window_half);

/// 256-bit binary descriptor.
struct BinaryDescriptor {
  std::array<uint64_t, 4> bits{};

  void set(int i) { bits[i >> 6] |= uint64_t(1) << (i & 63); }
  bool get(int i) const { return (bits[i >> 6] >> (i & 63)) & 1; }
};

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b);

/// BRIEF-256: Gaussian pre-smoothing (sigma 2), 256 coordinate pairs drawn
/// once from an isotropic Gaussian (sigma 6.5) under pattern_seed; bit b is
/// [I(p1) < I(p2)]. Keypoints closer than 16 px to a border are dropped;
/// `kept` maps descriptor rows back to input indices.
struct BriefResult {
  std::vector<BinaryDescriptor> descriptors;
  std::vector<int> kept;
};
BriefResult brief_describe(const Image& image, const std::vector<Keypoint>& kps,
                           uint64_t pattern_seed);

/// Learned keypoints: NMS over the probability map, descriptors read from the
/// descriptor map at each keypoint (rows of `descriptors`).
struct LearnedFeatures {
  std::vector<Keypoint> keypoints;
  Eigen::MatrixXd descriptors;
};
LearnedFeatures learned_detect_describe(const Model& model, const Image& image, int top_n,
                                        int nms_radius);

}  // namespace featureness
