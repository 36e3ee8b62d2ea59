#pragma once

#include <string>

#include "featureness/pose.hpp"

namespace featureness {

enum class AlignMode { none, similarity };

/// Positional RMSE between trajectories of equal length. Similarity mode
/// applies the closed-form least-squares (Umeyama) rotation/translation/scale
/// alignment of the estimate onto the ground truth first.
double align_and_rmse(const Trajectory& estimated, const Trajectory& ground_truth,
                      AlignMode mode);

/// Table-style keypoint reduction: 100 * (1 - filtered / unfiltered).
double reduction_pct(double kp_mean_unfiltered, double kp_mean_filtered);

/// CSV per frame: index, tx, ty, tz, r00..r22.
void save_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory_csv(const std::string& path);

}  // namespace featureness
