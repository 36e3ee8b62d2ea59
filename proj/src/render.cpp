#include "featureness/render.hpp"

#include <cmath>
#include <stdexcept>

#include "featureness/datagen.hpp"
#include "featureness/warp.hpp"

namespace featureness {

namespace {

// Axis-aligned plane with a finite textured extent.
struct TexturedPlane {
  int axis;          // 0 = x, 1 = y, 2 = z: the fixed coordinate
  double offset;     // plane position along that axis
  int u_axis, v_axis;
  double u0, v0;     // world coordinate of texture origin
  Image texture;
  double texels_per_meter;

  // Returns ray parameter t, or a negative value when there is no forward hit.
  double intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const {
    const double denom = d[axis];
    if (std::abs(denom) < 1e-12) return -1.0;
    return (offset - o[axis]) / denom;
  }

  float sample(const Eigen::Vector3d& hit) const {
    double u = (hit[u_axis] - u0) * texels_per_meter;
    double v = (hit[v_axis] - v0) * texels_per_meter;
    u = std::clamp(u, 0.0, double(texture.width - 1));
    v = std::clamp(v, 0.0, double(texture.height - 1));
    return bilinear_sample(texture, u, v);
  }
};

Eigen::Matrix3d yaw_rotation(double psi) {
  // About the y (down) axis; heading stays in the x-z plane.
  Eigen::Matrix3d r;
  const double c = std::cos(psi), s = std::sin(psi);
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

}  // namespace

SceneSequence render_sequence(const RenderConfig& config, Rng& rng) {
  if (config.frames < 2) throw std::invalid_argument("render_sequence: frames must be >= 2");
  if (config.width < 16 || config.height < 16) {
    throw std::invalid_argument("render_sequence: image size too small");
  }

  const double hw = config.corridor_half_width;
  const double hh = config.corridor_half_height;
  const double len = config.corridor_length;
  const double margin = config.corridor_margin;
  const double tpm = config.texels_per_meter;

  auto make_texture = [&](double u_extent, double v_extent) {
    const int tw = std::max(32, static_cast<int>(std::ceil(u_extent * tpm)) + 1);
    const int th = std::max(32, static_cast<int>(std::ceil(v_extent * tpm)) + 1);
    return gen_texture_image(rng, th, tw);
  };

  // Closed box: left/right walls, floor/ceiling, back/front caps.
  std::vector<TexturedPlane> planes;
  const double zspan = len + margin;
  planes.push_back({0, -hw, 2, 1, -margin, -hh, make_texture(zspan, 2 * hh), tpm});  // left
  planes.push_back({0, +hw, 2, 1, -margin, -hh, make_texture(zspan, 2 * hh), tpm});  // right
  planes.push_back({1, +hh, 2, 0, -margin, -hw, make_texture(zspan, 2 * hw), tpm});  // floor
  planes.push_back({1, -hh, 2, 0, -margin, -hw, make_texture(zspan, 2 * hw), tpm});  // ceiling
  planes.push_back({2, len, 0, 1, -hw, -hh, make_texture(2 * hw, 2 * hh), tpm});     // back
  planes.push_back({2, -margin, 0, 1, -hw, -hh, make_texture(2 * hw, 2 * hh), tpm}); // front

  SceneSequence seq;
  seq.intrinsics = {config.focal, config.focal,
                    0.5 * (config.width - 1), 0.5 * (config.height - 1)};

  // Exact poses first; the renderer only consumes them.
  double psi = 0.0;
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  for (int k = 0; k < config.frames; ++k) {
    Pose pose;
    pose.R = yaw_rotation(psi);
    pose.t = pos;
    seq.poses_gt.push_back(pose);

    const double clearance = 0.05;
    if (std::abs(pos.x()) >= hw - clearance || std::abs(pos.y()) >= hh - clearance ||
        pos.z() <= -margin + clearance || pos.z() >= len - clearance) {
      throw std::runtime_error("render_sequence: camera path leaves the corridor at frame " +
                               std::to_string(k));
    }

    pos += config.forward_speed * Eigen::Vector3d(std::sin(psi), 0.0, std::cos(psi));
    psi += config.yaw_rate;
  }

  std::vector<PixelRect> zone_rects;
  for (const auto& z : config.zones) {
    PixelRect r;
    r.x = static_cast<int>(std::floor(z.x_frac * config.width));
    r.y = static_cast<int>(std::floor(z.y_frac * config.height));
    r.w = static_cast<int>(std::round(z.w_frac * config.width));
    r.h = static_cast<int>(std::round(z.h_frac * config.height));
    r.w = std::min(r.w, config.width - r.x);
    r.h = std::min(r.h, config.height - r.y);
    zone_rects.push_back(r);
  }

  Rng zone_rng = rng.derive("unreliable_zones");
  for (int k = 0; k < config.frames; ++k) {
    const Pose& pose = seq.poses_gt[k];
    Image frame(config.height, config.width);
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        const Eigen::Vector3d d_cam((x - seq.intrinsics.cx) / seq.intrinsics.fx,
                                    (y - seq.intrinsics.cy) / seq.intrinsics.fy, 1.0);
        const Eigen::Vector3d d = pose.R * d_cam;
        double best_t = 1e30;
        const TexturedPlane* best = nullptr;
        for (const auto& plane : planes) {
          const double t = plane.intersect(pose.t, d);
          if (t > 1e-9 && t < best_t) {
            best_t = t;
            best = &plane;
          }
        }
        frame.at(y, x) = best ? best->sample(pose.t + best_t * d) : 0.5f;
      }
    }

    Rng frame_rng = zone_rng.derive(static_cast<uint64_t>(k));
    for (size_t zi = 0; zi < zone_rects.size(); ++zi) {
      const PixelRect& r = zone_rects[zi];
      const UnreliableZone& z = config.zones[zi];
      for (int y = r.y; y < r.y + r.h; ++y) {
        for (int x = r.x; x < r.x + r.w; ++x) {
          frame.at(y, x) = z.mode == UnreliableZone::Mode::noise
                               ? static_cast<float>(frame_rng.uniform())
                               : z.uniform_value;
        }
      }
    }

    seq.frames.push_back(std::move(frame));
    seq.unreliable_zones.push_back(zone_rects);
  }
  return seq;
}

}  // namespace featureness
