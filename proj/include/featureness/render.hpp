#pragma once

#include <optional>
#include <vector>

#include "featureness/image.hpp"
#include "featureness/pose.hpp"
#include "featureness/rng.hpp"

namespace featureness {

struct CameraIntrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
};

/// Screen-space region overwritten per frame, emulating visually unreliable
/// content (dynamic or textureless areas).
struct UnreliableZone {
  double x_frac = 0, y_frac = 0;  // top-left corner, fraction of image size
  double w_frac = 0, h_frac = 0;
  enum class Mode { noise, uniform } mode = Mode::noise;
  float uniform_value = 0.5f;
};

struct PixelRect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
};

struct SceneSequence {
  std::vector<Image> frames;
  Trajectory poses_gt;  // camera-to-world, first pose identity
  CameraIntrinsics intrinsics;
  std::vector<std::vector<PixelRect>> unreliable_zones;  // per frame, may be empty
};

/// Textured box corridor rendered by per-pixel ray/plane intersection.
/// Camera convention: x right, y down, z forward; yaw rotates about y.
struct RenderConfig {
  int frames = 100;
  int width = 320;
  int height = 240;
  double focal = 260.0;             // fx = fy
  double forward_speed = 0.1;       // meters per frame
  double yaw_rate = 0.0;            // radians per frame
  double corridor_half_width = 2.0;
  double corridor_half_height = 1.5;
  double corridor_length = 30.0;    // meters ahead of the start pose
  double corridor_margin = 4.0;     // meters behind the start pose
  double texels_per_meter = 48.0;
  std::vector<UnreliableZone> zones;
};

SceneSequence render_sequence(const RenderConfig& config, Rng& rng);

}  // namespace featureness
