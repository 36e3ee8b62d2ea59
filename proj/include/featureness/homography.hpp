#pragma once

#include <Eigen/Dense>

#include "featureness/rng.hpp"

namespace featureness {

/// Planar projective transform. Always normalized so m(2,2) = 1 and checked
/// for invertibility on construction.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Homography inverse() const;
  Homography operator*(const Homography& rhs) const { return Homography(m_ * rhs.m_); }

  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);

 private:
  Eigen::Matrix3d m_;
};

/// Maps (x, y) through h. Throws if the point maps to infinity (|w| < 1e-12).
Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p);

/// Perturbation ranges for random homography sampling. Defaults give strong
/// viewpoint changes while keeping most of the image covisible.
struct HomographyBounds {
  double max_rotation_deg = 15.0;
  double min_scale = 0.8;
  double max_scale = 1.2;
  double translation_frac = 0.1;  // of the image side, per axis
  double perspective = 1e-4;      // bottom-row jitter

  static HomographyBounds none() { return {0.0, 1.0, 1.0, 0.0, 0.0}; }
};

/// Random rotation / anisotropic scale / translation / perspective composed
/// about the image center. Always invertible; zero bounds give the identity.
Homography sample_homography(Rng& rng, const HomographyBounds& bounds, int width, int height);

}  // namespace featureness
