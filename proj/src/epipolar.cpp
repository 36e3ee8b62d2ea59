#include "featureness/epipolar.hpp"

#include <cmath>
#include <limits>

namespace featureness {

namespace {

// Hartley conditioning: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());

  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;

  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = scale;
  t(1, 1) = scale;
  t(0, 2) = -scale * centroid.x();
  t(1, 2) = -scale * centroid.y();
  return t;
}

}  // namespace

Eigen::Matrix3d eight_point(const std::vector<Eigen::Vector2d>& a,
                            const std::vector<Eigen::Vector2d>& b) {
  const int n = static_cast<int>(a.size());
  if (n < 8 || b.size() != a.size()) {
    throw std::invalid_argument("eight_point: needs >= 8 point pairs");
  }

  const Eigen::Matrix3d ta = normalizing_transform(a);
  const Eigen::Matrix3d tb = normalizing_transform(b);

  Eigen::MatrixXd design(n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d pa = ta * Eigen::Vector3d(a[i].x(), a[i].y(), 1.0);
    const Eigen::Vector3d pb = tb * Eigen::Vector3d(b[i].x(), b[i].y(), 1.0);
    design.row(i) << pb.x() * pa.x(), pb.x() * pa.y(), pb.x(),
                     pb.y() * pa.x(), pb.y() * pa.y(), pb.y(),
                     pa.x(), pa.y(), 1.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // The solution must be a one-dimensional null space: rank 8 required.
  if (sv(7) < 1e-10 * std::max(sv(0), 1e-300)) {
    throw std::runtime_error("eight_point: degenerate configuration (rank-deficient design)");
  }

  const Eigen::VectorXd e = svd.matrixV().col(8);
  Eigen::Matrix3d en;
  en << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  Eigen::Matrix3d essential = tb.transpose() * en * ta;

  // Project onto the essential manifold with unit twin singular values.
  Eigen::JacobiSVD<Eigen::Matrix3d> esvd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return esvd.matrixU() * Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal() *
         esvd.matrixV().transpose();
}

double sampson_error(const Eigen::Matrix3d& e, const Eigen::Vector2d& a,
                     const Eigen::Vector2d& b) {
  const Eigen::Vector3d pa(a.x(), a.y(), 1.0);
  const Eigen::Vector3d pb(b.x(), b.y(), 1.0);
  const Eigen::Vector3d ea = e * pa;
  const Eigen::Vector3d etb = e.transpose() * pb;
  const double r = pb.dot(ea);
  const double denom = ea.x() * ea.x() + ea.y() * ea.y() + etb.x() * etb.x() + etb.y() * etb.y();
  if (denom < 1e-300) return std::numeric_limits<double>::infinity();
  return r * r / denom;
}

RansacResult estimate_essential_ransac(const std::vector<Eigen::Vector2d>& a,
                                       const std::vector<Eigen::Vector2d>& b,
                                       const RansacConfig& config) {
  const int n = static_cast<int>(a.size());
  if (n < 8 || b.size() != a.size()) {
    throw std::invalid_argument("estimate_essential_ransac: needs >= 8 pairs");
  }

  Rng rng(config.seed);
  const double sq_threshold = config.threshold * config.threshold;

  RansacResult result;
  std::vector<int> best;
  int needed = config.max_iters;
  int iter = 0;
  for (; iter < needed && iter < config.max_iters; ++iter) {
    // Minimal sample of 8 distinct indices.
    std::vector<int> sample;
    std::vector<uint8_t> taken(n, 0);
    while (static_cast<int>(sample.size()) < 8) {
      const int idx = static_cast<int>(rng.uniform_index(n));
      if (taken[idx]) continue;
      taken[idx] = 1;
      sample.push_back(idx);
    }
    std::vector<Eigen::Vector2d> sa, sb;
    for (const int idx : sample) {
      sa.push_back(a[idx]);
      sb.push_back(b[idx]);
    }

    Eigen::Matrix3d e;
    try {
      e = eight_point(sa, sb);
    } catch (const std::runtime_error&) {
      continue;  // degenerate sample
    }

    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (sampson_error(e, a[i], b[i]) <= sq_threshold) inliers.push_back(i);
    }
    if (inliers.size() > best.size()) {
      best = std::move(inliers);
      const double w = static_cast<double>(best.size()) / n;
      if (w >= 1.0 - 1e-12) {
        needed = iter + 1;
      } else {
        const double denom = std::log(1.0 - std::pow(w, 8));
        if (denom < 0.0) {
          needed = static_cast<int>(std::min<double>(
              config.max_iters, std::ceil(std::log(1.0 - config.confidence) / denom)));
        }
      }
    }
  }
  result.iterations = iter;

  if (static_cast<int>(best.size()) < 8) {
    throw tracking_failure_error("estimate_essential_ransac: best model has " +
                                 std::to_string(best.size()) + " inliers (< 8)");
  }

  // Refit on the consensus set, then report the refit model's inliers.
  std::vector<Eigen::Vector2d> ia, ib;
  for (const int idx : best) {
    ia.push_back(a[idx]);
    ib.push_back(b[idx]);
  }
  result.essential = eight_point(ia, ib);
  for (int i = 0; i < n; ++i) {
    if (sampson_error(result.essential, a[i], b[i]) <= sq_threshold) {
      result.inliers.push_back(i);
    }
  }
  if (static_cast<int>(result.inliers.size()) < 8) {
    result.inliers = best;  // refit degraded the consensus; keep the vote set
  }
  return result;
}

Eigen::Vector3d triangulate_point(const Eigen::Matrix3d& rotation,
                                  const Eigen::Vector3d& translation, const Eigen::Vector2d& a,
                                  const Eigen::Vector2d& b) {
  Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
  p1.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 4> p2;
  p2.block<3, 3>(0, 0) = rotation;
  p2.col(3) = translation;

  Eigen::Matrix4d design;
  design.row(0) = a.x() * p1.row(2) - p1.row(0);
  design.row(1) = a.y() * p1.row(2) - p1.row(1);
  design.row(2) = b.x() * p2.row(2) - p2.row(0);
  design.row(3) = b.y() * p2.row(2) - p2.row(1);

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(design, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-12) {
    return Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  }
  return x.head<3>() / x(3);
}

RelativePose recover_pose(const Eigen::Matrix3d& e, const std::vector<Eigen::Vector2d>& a,
                          const std::vector<Eigen::Vector2d>& b) {
  if (a.empty() || a.size() != b.size()) {
    throw std::invalid_argument("recover_pose: needs at least one inlier pair");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() < 0) u = -u;
  if (v.determinant() < 0) v = -v;

  Eigen::Matrix3d w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Eigen::Matrix3d r1 = u * w * v.transpose();
  const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  const Eigen::Vector3d t = u.col(2);

  const Eigen::Matrix3d rotations[4] = {r1, r1, r2, r2};
  const Eigen::Vector3d translations[4] = {t, -t, t, -t};

  int best_count = -1;
  RelativePose best;
  for (int c = 0; c < 4; ++c) {
    int count = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      const Eigen::Vector3d x = triangulate_point(rotations[c], translations[c], a[i], b[i]);
      if (!x.allFinite()) continue;
      const double z1 = x.z();
      const double z2 = (rotations[c] * x + translations[c]).z();
      if (z1 > 0.0 && z2 > 0.0) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = {rotations[c], translations[c], count};
    }
  }

  if (best_count * 2 <= static_cast<int>(a.size())) {
    throw std::runtime_error("recover_pose: no candidate has a positive-depth majority (" +
                             std::to_string(best_count) + "/" + std::to_string(a.size()) + ")");
  }
  return best;
}

}  // namespace featureness
