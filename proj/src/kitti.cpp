#include "featureness/kitti.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "featureness/image_io.hpp"

namespace fs = std::filesystem;

namespace featureness {

namespace {

std::string frame_path(const std::string& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.png", index);
  return (fs::path(dir) / "image_0" / name).string();
}

std::vector<Pose> read_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open poses file: " + path);
  std::vector<Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double v[12];
    for (int i = 0; i < 12; ++i) {
      if (!(ss >> v[i])) {
        throw std::runtime_error("unparseable pose line " + std::to_string(line_no) + " in " +
                                 path);
      }
    }
    Pose p;
    p.R << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    p.t << v[3], v[7], v[11];
    poses.push_back(p);
  }
  return poses;
}

CameraIntrinsics read_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("P0:", 0) != 0) continue;
    std::istringstream ss(line.substr(3));
    double v[12];
    for (int i = 0; i < 12; ++i) {
      if (!(ss >> v[i])) {
        throw std::runtime_error("unparseable calibration line " + std::to_string(line_no) +
                                 " in " + path);
      }
    }
    return {v[0], v[5], v[2], v[6]};
  }
  throw std::runtime_error("no P0 line in calibration file: " + path);
}

int count_frames(const std::string& dir) {
  int n = 0;
  while (fs::exists(frame_path(dir, n))) ++n;
  return n;
}

}  // namespace

SceneSequence load_kitti(const std::string& dir, int first, int last) {
  if (first < 0 || last <= first) {
    throw std::invalid_argument("load_kitti: invalid frame range");
  }
  const std::vector<Pose> all_poses = read_poses((fs::path(dir) / "poses.txt").string());
  const int n_images = count_frames(dir);
  if (static_cast<int>(all_poses.size()) != n_images) {
    throw std::runtime_error("pose/image count mismatch in " + dir + ": " +
                             std::to_string(all_poses.size()) + " pose lines vs " +
                             std::to_string(n_images) + " images");
  }
  if (last > n_images) {
    throw std::runtime_error("frame range [" + std::to_string(first) + ", " +
                             std::to_string(last) + ") exceeds available frames: only " +
                             std::to_string(n_images) + " present, short by " +
                             std::to_string(last - n_images));
  }

  SceneSequence seq;
  seq.intrinsics = read_calib((fs::path(dir) / "calib.txt").string());
  const Pose base_inv = all_poses[first].inverse();
  for (int k = first; k < last; ++k) {
    seq.frames.push_back(load_image_gray(frame_path(dir, k)));
    seq.poses_gt.push_back(base_inv * all_poses[k]);
    seq.unreliable_zones.emplace_back();
  }
  return seq;
}

void save_kitti(const std::string& dir, const SceneSequence& seq) {
  fs::create_directories(fs::path(dir) / "image_0");
  for (size_t k = 0; k < seq.frames.size(); ++k) {
    write_png_gray(frame_path(dir, static_cast<int>(k)), seq.frames[k]);
  }

  std::ofstream poses((fs::path(dir) / "poses.txt").string());
  if (!poses) throw std::runtime_error("cannot write poses.txt in " + dir);
  poses.precision(17);
  for (const Pose& p : seq.poses_gt) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (r != 0 || c != 0) poses << ' ';
        poses << (c < 3 ? p.R(r, c) : p.t(r));
      }
    }
    poses << '\n';
  }

  std::ofstream calib((fs::path(dir) / "calib.txt").string());
  if (!calib) throw std::runtime_error("cannot write calib.txt in " + dir);
  calib.precision(17);
  const CameraIntrinsics& in = seq.intrinsics;
  calib << "P0: " << in.fx << " 0 " << in.cx << " 0 0 " << in.fy << " " << in.cy
        << " 0 0 0 1 0\n";
}

}  // namespace featureness
