#pragma once

#include <Eigen/Dense>
#include <vector>

namespace featureness {

/// Rigid camera-to-world transform. R is proper orthonormal.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  /// Composition: this * rhs maps rhs-frame coordinates through this.
  Pose operator*(const Pose& rhs) const { return {R * rhs.R, R * rhs.t + t}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }
};

using Trajectory = std::vector<Pose>;

}  // namespace featureness
