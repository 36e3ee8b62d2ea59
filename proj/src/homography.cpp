#include "featureness/homography.hpp"

#include <cmath>
#include <stdexcept>

namespace featureness {

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  const double det = m_.determinant();
  if (std::abs(det) <= 1e-12) {
    throw std::invalid_argument("homography is not invertible (|det| <= 1e-12)");
  }
  if (std::abs(m_(2, 2)) <= 1e-12) {
    throw std::invalid_argument("homography has vanishing scale entry m(2,2)");
  }
  m_ /= m_(2, 2);
}

Homography Homography::inverse() const { return Homography(Eigen::Matrix3d(m_.inverse())); }

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h.matrix() * Eigen::Vector3d(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < 1e-12) {
    throw std::domain_error("apply_homography: point maps to infinity");
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

Homography sample_homography(Rng& rng, const HomographyBounds& bounds, int width, int height) {
  const double rot = rng.uniform(-bounds.max_rotation_deg, bounds.max_rotation_deg) * M_PI / 180.0;
  const double sx = rng.uniform(bounds.min_scale, bounds.max_scale);
  const double sy = rng.uniform(bounds.min_scale, bounds.max_scale);
  const double side = 0.5 * (width + height);
  const double tx = rng.uniform(-bounds.translation_frac, bounds.translation_frac) * side;
  const double ty = rng.uniform(-bounds.translation_frac, bounds.translation_frac) * side;
  const double p0 = rng.uniform(-bounds.perspective, bounds.perspective);
  const double p1 = rng.uniform(-bounds.perspective, bounds.perspective);

  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);

  Eigen::Matrix3d to_center = Eigen::Matrix3d::Identity();
  to_center(0, 2) = -cx;
  to_center(1, 2) = -cy;
  Eigen::Matrix3d from_center = Eigen::Matrix3d::Identity();
  from_center(0, 2) = cx + tx;
  from_center(1, 2) = cy + ty;

  Eigen::Matrix3d rs = Eigen::Matrix3d::Identity();
  const double c = std::cos(rot), s = std::sin(rot);
  rs(0, 0) = c * sx;
  rs(0, 1) = -s * sy;
  rs(1, 0) = s * sx;
  rs(1, 1) = c * sy;

  Eigen::Matrix3d persp = Eigen::Matrix3d::Identity();
  persp(2, 0) = p0;
  persp(2, 1) = p1;

  return Homography(from_center * rs * persp * to_center);
}

}  // namespace featureness
