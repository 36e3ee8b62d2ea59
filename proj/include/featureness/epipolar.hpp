#pragma once

#include <Eigen/Dense>
#include <vector>

#include "featureness/rng.hpp"

namespace featureness {

struct tracking_failure_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Least-squares essential matrix from >= 8 calibrated correspondences
/// (b^T E a = 0 with a in the first view, b in the second). Hartley-normalized
/// design matrix, SVD solution, singular values projected to (s, s, 0) and
/// rescaled so ||E||_F = sqrt(2). Throws on rank-deficient (degenerate)
/// configurations, e.g. pure rotation.
Eigen::Matrix3d eight_point(const std::vector<Eigen::Vector2d>& a,
                            const std::vector<Eigen::Vector2d>& b);

/// First-order geometric epipolar error (squared, normalized coordinates).
double sampson_error(const Eigen::Matrix3d& e, const Eigen::Vector2d& a,
                     const Eigen::Vector2d& b);

struct RansacConfig {
  double threshold = 0.01;   // Sampson distance, normalized coordinates
  int max_iters = 1000;
  double confidence = 0.999;
  uint64_t seed = 0;
};

struct RansacResult {
  Eigen::Matrix3d essential = Eigen::Matrix3d::Zero();
  std::vector<int> inliers;
  int iterations = 0;
};

/// Repeated 8-point on random minimal samples with a Sampson inlier test and
/// adaptive iteration count; the final E is refit on all inliers.
/// Deterministic under the config seed. Throws tracking_failure_error when
/// fewer than 8 inliers support the best model.
RansacResult estimate_essential_ransac(const std::vector<Eigen::Vector2d>& a,
                                       const std::vector<Eigen::Vector2d>& b,
                                       const RansacConfig& config);

struct RelativePose {
  Eigen::Matrix3d rotation;     // x_b = R x_a + t
  Eigen::Vector3d translation;  // unit norm
  int positive_depth = 0;
};

/// Linear (DLT) triangulation under P1 = [I|0], P2 = [R|t].
Eigen::Vector3d triangulate_point(const Eigen::Matrix3d& rotation,
                                  const Eigen::Vector3d& translation, const Eigen::Vector2d& a,
                                  const Eigen::Vector2d& b);

/// Four-fold SVD decomposition of E with cheirality disambiguation: the
/// candidate maximizing points triangulated in front of both cameras wins.
/// Throws when no candidate achieves a positive-depth majority.
RelativePose recover_pose(const Eigen::Matrix3d& e, const std::vector<Eigen::Vector2d>& a,
                          const std::vector<Eigen::Vector2d>& b);

}  // namespace featureness
