#include "featureness/featureness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "featureness/image_io.hpp"

namespace fs = std::filesystem;

namespace featureness {

PixelMask featureness_mask(const Image& p, const Image& u, const Thresholds& thresholds) {
  if (p.height != u.height || p.width != u.width) {
    throw std::invalid_argument("featureness_mask: P/U shape mismatch");
  }
  const bool strict = thresholds.strict();
  PixelMask f(p.height, p.width);
  for (size_t i = 0; i < p.size(); ++i) {
    const bool prob_ok = strict ? p.data[i] > thresholds.p_t : p.data[i] >= thresholds.p_t;
    f.flags[i] = (prob_ok && u.data[i] <= thresholds.sigma_t) ? 1 : 0;
  }
  return f;
}

FeaturenessMaps compute_featureness(const Model& detector, const UncertaintyHead& head,
                                    const Image& image, const Thresholds& thresholds) {
  const DenseOutputs out = detector_infer(detector, image);
  const Tensor u = head.infer(out.feat, out.prob);

  FeaturenessMaps maps;
  maps.P = Image(image.height, image.width);
  maps.U = Image(image.height, image.width);
  for (size_t i = 0; i < maps.P.size(); ++i) {
    maps.P.data[i] = static_cast<float>(out.prob.v[i]);
    maps.U.data[i] = static_cast<float>(u.v[i]);
  }
  maps.F = featureness_mask(maps.P, maps.U, thresholds);
  return maps;
}

std::vector<int> filter_keypoint_indices(const std::vector<Keypoint>& kps, const PixelMask& f,
                                         BorderPolicy border) {
  std::vector<int> kept;
  for (size_t i = 0; i < kps.size(); ++i) {
    const Keypoint& kp = kps[i];
    if (kp.x < -0.5 || kp.x > f.width - 0.5 || kp.y < -0.5 || kp.y > f.height - 0.5) {
      throw std::out_of_range("filter_keypoints: keypoint (" + std::to_string(kp.x) + ", " +
                              std::to_string(kp.y) + ") outside image bounds");
    }
    int px = static_cast<int>(std::lround(kp.x));
    int py = static_cast<int>(std::lround(kp.y));
    if (px < 0 || px >= f.width || py < 0 || py >= f.height) {
      if (border == BorderPolicy::error) {
        throw std::out_of_range("filter_keypoints: keypoint rounds outside the mask grid");
      }
      px = std::clamp(px, 0, f.width - 1);
      py = std::clamp(py, 0, f.height - 1);
    }
    if (f.at(py, px)) kept.push_back(static_cast<int>(i));
  }
  return kept;
}

std::vector<Keypoint> filter_keypoints(const std::vector<Keypoint>& kps, const PixelMask& f,
                                       BorderPolicy border) {
  std::vector<Keypoint> kept;
  for (const int i : filter_keypoint_indices(kps, f, border)) kept.push_back(kps[i]);
  return kept;
}

Image apply_mask_to_image(const Image& img, const PixelMask& f) {
  Image out = img;
  for (size_t i = 0; i < out.size(); ++i) {
    if (!f.flags[i]) out.data[i] = 0.0f;
  }
  return out;
}

double mask_area(const PixelMask& f) {
  if (f.flags.empty()) return 0.0;
  return 100.0 * static_cast<double>(f.count()) / static_cast<double>(f.flags.size());
}

void write_map_csv(const std::string& path, const Image& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV heatmap: " + path);
  char buf[32];
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      std::snprintf(buf, sizeof(buf), "%.6f", map.at(y, x));
      out << (x ? "," : "") << buf;
    }
    out << '\n';
  }
}

Image read_map_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read CSV heatmap: " + path);
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty CSV heatmap: " + path);
  Image img(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < img.height; ++y) {
    if (static_cast<int>(rows[y].size()) != img.width) {
      throw std::runtime_error("ragged CSV heatmap: " + path);
    }
    for (int x = 0; x < img.width; ++x) img.at(y, x) = rows[y][x];
  }
  return img;
}

void export_heatmaps(const FeaturenessMaps& maps, const std::string& dir) {
  fs::create_directories(dir);
  write_png_gray((fs::path(dir) / "P.png").string(), maps.P);
  write_png_gray((fs::path(dir) / "U.png").string(), maps.U);

  Image f_img(maps.F.height, maps.F.width);
  for (size_t i = 0; i < maps.F.flags.size(); ++i) f_img.data[i] = maps.F.flags[i] ? 1.0f : 0.0f;
  write_png_gray((fs::path(dir) / "F.png").string(), f_img);

  write_map_csv((fs::path(dir) / "P.csv").string(), maps.P);
  write_map_csv((fs::path(dir) / "U.csv").string(), maps.U);
}

}  // namespace featureness
