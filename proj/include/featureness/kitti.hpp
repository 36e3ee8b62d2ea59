#pragma once

#include <string>

#include "featureness/render.hpp"

namespace featureness {

/// KITTI odometry layout:
///   <dir>/image_0/%06d.png
///   <dir>/poses.txt   12 reals per line, row-major 3x4 camera-to-world
///   <dir>/calib.txt   line "P0: <12 reals>", fx = e0, cx = e2, fy = e5, cy = e6
///
/// Loads frames [first, last) and re-bases poses so the first one is identity.
SceneSequence load_kitti(const std::string& dir, int first, int last);

/// Writes a rendered sequence in the same layout, so both data paths share the
/// loader.
void save_kitti(const std::string& dir, const SceneSequence& seq);

}  // namespace featureness
