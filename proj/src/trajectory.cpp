#include "featureness/trajectory.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace featureness {

double align_and_rmse(const Trajectory& estimated, const Trajectory& ground_truth,
                      AlignMode mode) {
  if (estimated.size() != ground_truth.size()) {
    throw std::invalid_argument("align_and_rmse: trajectory length mismatch (" +
                                std::to_string(estimated.size()) + " vs " +
                                std::to_string(ground_truth.size()) + ")");
  }
  if (estimated.empty()) throw std::invalid_argument("align_and_rmse: empty trajectories");

  const int n = static_cast<int>(estimated.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = estimated[i].t;
    dst.col(i) = ground_truth[i].t;
  }

  if (mode == AlignMode::similarity) {
    const Eigen::Matrix4d transform = Eigen::umeyama(src, dst, true);
    const Eigen::Matrix3d sr = transform.block<3, 3>(0, 0);
    const Eigen::Vector3d tr = transform.block<3, 1>(0, 3);
    src = (sr * src).colwise() + tr;
  }

  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) sum_sq += (src.col(i) - dst.col(i)).squaredNorm();
  return std::sqrt(sum_sq / n);
}

double reduction_pct(double kp_mean_unfiltered, double kp_mean_filtered) {
  if (kp_mean_unfiltered <= 0.0) {
    throw std::invalid_argument("reduction_pct: unfiltered mean must be positive");
  }
  return 100.0 * (1.0 - kp_mean_filtered / kp_mean_unfiltered);
}

void save_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory CSV: " + path);
  out << "index,tx,ty,tz,r00,r01,r02,r10,r11,r12,r20,r21,r22\n";
  out.precision(17);
  for (size_t i = 0; i < traj.size(); ++i) {
    const Pose& p = traj[i];
    out << i << ',' << p.t.x() << ',' << p.t.y() << ',' << p.t.z();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << ',' << p.R(r, c);
    }
    out << '\n';
  }
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trajectory CSV: " + path);
  std::string line;
  std::getline(in, line);  // header
  Trajectory traj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 13) throw std::runtime_error("malformed trajectory CSV row in " + path);
    Pose p;
    p.t = {vals[1], vals[2], vals[3]};
    p.R << vals[4], vals[5], vals[6], vals[7], vals[8], vals[9], vals[10], vals[11], vals[12];
    traj.push_back(p);
  }
  return traj;
}

}  // namespace featureness
