#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "featureness/datagen.hpp"
#include "featureness/image_io.hpp"
#include "featureness/kitti.hpp"

using namespace featureness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("featureness_datagen_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double intensity_std(const Image& img) {
  double mean = 0.0;
  for (const float v : img.data) mean += v;
  mean /= img.size();
  double var = 0.0;
  for (const float v : img.data) var += (v - mean) * (v - mean);
  return std::sqrt(var / img.size());
}

}  // namespace

TEST_CASE("gen_texture_image: determinism, contrast, minimum size") {
  Rng a(42), b(42);
  const Image ia = gen_texture_image(a, 64, 64);
  const Image ib = gen_texture_image(b, 64, 64);
  CHECK(ia.data == ib.data);

  CHECK_THROWS_AS((void)gen_texture_image(a, 31, 64), std::invalid_argument);
  Rng c(1);
  const Image tiny = gen_texture_image(c, 32, 32);
  CHECK(tiny.height == 32);
  CHECK(tiny.width == 32);
}

TEST_CASE("gen_texture_image: 100 samples have full contrast and std >= 0.1") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const Image img = gen_texture_image(rng, 64, 64);
    const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
    CHECK(*mn < 0.1f);
    CHECK(*mx > 0.9f);
    CHECK(intensity_std(img) >= 0.1);
  }
}

TEST_CASE("gen_pair: degenerate config copies the image") {
  Rng rng(5);
  const Image img = gen_texture_image(rng, 48, 48);
  const TrainingPair pair = gen_pair(rng, img, HomographyBounds::none(), PhotometricConfig::none());
  CHECK((pair.h_ab.matrix() - Eigen::Matrix3d::Identity()).norm() == 0.0);
  CHECK(pair.img_b.data == pair.img_a.data);
  CHECK(pair.valid_b.count() == pair.img_b.size());
}

TEST_CASE("gen_pair: default config keeps most pixels valid, reproducible") {
  Rng rng(9);
  const Image img = gen_texture_image(rng, 96, 96);
  for (int i = 0; i < 20; ++i) {
    const TrainingPair pair = gen_pair(rng, img, HomographyBounds{}, PhotometricConfig{});
    CHECK(double(pair.valid_b.count()) / pair.img_b.size() >= 0.5);
    for (const float v : pair.img_b.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }

  Rng r1(33), r2(33);
  const TrainingPair p1 = gen_pair(r1, img, HomographyBounds{}, PhotometricConfig{});
  const TrainingPair p2 = gen_pair(r2, img, HomographyBounds{}, PhotometricConfig{});
  CHECK(p1.img_b.data == p2.img_b.data);
  CHECK((p1.h_ab.matrix() - p2.h_ab.matrix()).norm() == 0.0);
}

TEST_CASE("gen_pair: h_ab is consistent with valid_b on a coordinate grid") {
  Rng rng(21);
  const Image img = gen_texture_image(rng, 64, 64);
  const TrainingPair pair = gen_pair(rng, img, HomographyBounds{}, PhotometricConfig::none());
  const Eigen::Matrix3d hinv = pair.h_ab.inverse().matrix();
  for (int y = 0; y < 64; y += 3) {
    for (int x = 0; x < 64; x += 3) {
      if (!pair.valid_b.at(y, x)) continue;
      // Valid pixels of b pull from inside a.
      const Eigen::Vector3d q = hinv * Eigen::Vector3d(x, y, 1.0);
      const double sx = q.x() / q.z(), sy = q.y() / q.z();
      CHECK(sx >= -1e-9);
      CHECK(sx <= 63.0 + 1e-9);
      CHECK(sy >= -1e-9);
      CHECK(sy <= 63.0 + 1e-9);
    }
  }
}

TEST_CASE("render_sequence: static camera repeats frames and poses") {
  RenderConfig cfg;
  cfg.frames = 2;
  cfg.width = 64;
  cfg.height = 48;
  cfg.forward_speed = 0.0;
  cfg.yaw_rate = 0.0;
  Rng rng(3);
  const SceneSequence seq = render_sequence(cfg, rng);
  REQUIRE(seq.frames.size() == 2);
  CHECK(seq.frames[0].data == seq.frames[1].data);
  CHECK((seq.poses_gt[0].R - seq.poses_gt[1].R).norm() == 0.0);
  CHECK((seq.poses_gt[0].t - seq.poses_gt[1].t).norm() == 0.0);
  CHECK((seq.poses_gt[0].R - Eigen::Matrix3d::Identity()).norm() == 0.0);
}

TEST_CASE("render_sequence: forward motion has exact ground-truth step norms") {
  RenderConfig cfg;
  cfg.frames = 100;
  cfg.width = 48;
  cfg.height = 48;
  cfg.forward_speed = 0.1;
  cfg.corridor_length = 30.0;
  Rng rng(4);
  const SceneSequence seq = render_sequence(cfg, rng);
  REQUIRE(seq.poses_gt.size() == 100);
  for (size_t k = 1; k < seq.poses_gt.size(); ++k) {
    const Pose rel = seq.poses_gt[k - 1].inverse() * seq.poses_gt[k];
    CHECK(rel.t.norm() == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("render_sequence: relative poses chain to the configured step") {
  RenderConfig cfg;
  cfg.frames = 20;
  cfg.width = 48;
  cfg.height = 48;
  cfg.forward_speed = 0.05;
  cfg.yaw_rate = 0.01;
  Rng rng(6);
  const SceneSequence seq = render_sequence(cfg, rng);
  for (size_t k = 1; k < seq.poses_gt.size(); ++k) {
    const Pose rel = seq.poses_gt[k - 1].inverse() * seq.poses_gt[k];
    CHECK(rel.t.norm() == doctest::Approx(0.05).epsilon(1e-9));
    const double yaw = std::atan2(rel.R(0, 2), rel.R(0, 0));
    CHECK(yaw == doctest::Approx(0.01).epsilon(1e-6));
  }
}

TEST_CASE("render_sequence: unreliable zone decorrelates between frames") {
  RenderConfig cfg;
  cfg.frames = 4;
  cfg.width = 80;
  cfg.height = 60;
  cfg.forward_speed = 0.0;
  UnreliableZone zone;
  zone.x_frac = 0.4;
  zone.y_frac = 0.3;
  zone.w_frac = 0.45;
  zone.h_frac = 0.45;
  cfg.zones.push_back(zone);
  Rng rng(8);
  const SceneSequence seq = render_sequence(cfg, rng);

  REQUIRE(seq.unreliable_zones[0].size() == 1);
  const PixelRect r = seq.unreliable_zones[0][0];
  CHECK(double(r.w * r.h) / (cfg.width * cfg.height) == doctest::Approx(0.2).epsilon(0.1));

  for (int k = 1; k < 4; ++k) {
    double mad = 0.0;
    for (int y = r.y; y < r.y + r.h; ++y) {
      for (int x = r.x; x < r.x + r.w; ++x) {
        mad += std::abs(seq.frames[k].at(y, x) - seq.frames[k - 1].at(y, x));
      }
    }
    mad /= r.w * r.h;
    CHECK(mad > 0.2);  // per-frame independent noise
  }
  // Outside the zone the static camera sees identical pixels.
  CHECK(seq.frames[0].at(0, 0) == seq.frames[1].at(0, 0));
}

TEST_CASE("render_sequence: camera path leaving the corridor is an error") {
  RenderConfig cfg;
  cfg.frames = 500;
  cfg.width = 48;
  cfg.height = 48;
  cfg.forward_speed = 0.1;
  cfg.corridor_length = 10.0;  // 500 * 0.1 = 50 m > 10 m
  Rng rng(10);
  CHECK_THROWS_WITH_AS((void)render_sequence(cfg, rng), doctest::Contains("leaves the corridor"),
                       std::runtime_error);
}

TEST_CASE("KITTI round trip through save_kitti/load_kitti") {
  RenderConfig cfg;
  cfg.frames = 6;
  cfg.width = 64;
  cfg.height = 48;
  cfg.forward_speed = 0.1;
  cfg.yaw_rate = 0.02;
  Rng rng(12);
  const SceneSequence seq = render_sequence(cfg, rng);
  const fs::path dir = temp_dir("roundtrip");
  save_kitti(dir.string(), seq);

  const SceneSequence back = load_kitti(dir.string(), 0, 6);
  REQUIRE(back.frames.size() == 6);
  CHECK(back.intrinsics.fx == doctest::Approx(seq.intrinsics.fx));
  CHECK(back.intrinsics.cy == doctest::Approx(seq.intrinsics.cy));
  for (int k = 0; k < 6; ++k) {
    CHECK((back.poses_gt[k].R - seq.poses_gt[k].R).norm() < 1e-12);
    CHECK((back.poses_gt[k].t - seq.poses_gt[k].t).norm() < 1e-12);
    for (size_t i = 0; i < seq.frames[k].size(); ++i) {
      CHECK(std::abs(back.frames[k].data[i] - seq.frames[k].data[i]) < 1.0f / 254.0f);
    }
  }

  // Sub-ranges re-base to identity at the first frame.
  const SceneSequence tail = load_kitti(dir.string(), 2, 6);
  REQUIRE(tail.frames.size() == 4);
  CHECK((tail.poses_gt[0].R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(tail.poses_gt[0].t.norm() < 1e-12);
}

TEST_CASE("load_kitti: identity pose line, range and mismatch errors") {
  const fs::path dir = temp_dir("errors");
  fs::create_directories(dir / "image_0");
  Image img(20, 20, 0.5f);
  for (int k = 0; k < 3; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", k);
    write_png_gray((dir / "image_0" / name).string(), img);
  }
  {
    std::ofstream poses(dir / "poses.txt");
    poses << "1 0 0 0 0 1 0 0 0 0 1 0\n";
    poses << "1 0 0 0.5 0 1 0 0 0 0 1 0\n";
    poses << "1 0 0 1.0 0 1 0 0 0 0 1 0\n";
  }
  {
    std::ofstream calib(dir / "calib.txt");
    calib << "P0: 100 0 10 0 0 100 10 0 0 0 1 0\n";
  }

  const SceneSequence seq = load_kitti(dir.string(), 0, 3);
  CHECK((seq.poses_gt[0].R - Eigen::Matrix3d::Identity()).norm() == 0.0);
  CHECK(seq.poses_gt[0].t.norm() == 0.0);
  CHECK(seq.poses_gt[1].t.x() == doctest::Approx(0.5));
  CHECK(seq.intrinsics.fx == doctest::Approx(100));
  CHECK(seq.intrinsics.cx == doctest::Approx(10));

  // Range beyond available frames names the shortfall.
  CHECK_THROWS_WITH_AS((void)load_kitti(dir.string(), 0, 5), doctest::Contains("short by 2"),
                       std::runtime_error);

  // Pose/image count mismatch.
  {
    std::ofstream poses(dir / "poses.txt");
    poses << "1 0 0 0 0 1 0 0 0 0 1 0\n";
  }
  CHECK_THROWS_WITH_AS((void)load_kitti(dir.string(), 0, 1), doctest::Contains("mismatch"),
                       std::runtime_error);

  // Unparseable pose line reports its line number.
  {
    std::ofstream poses(dir / "poses.txt");
    poses << "1 0 0 0 0 1 0 0 0 0 1 0\n";
    poses << "1 0 0 bad 0 1 0 0 0 0 1 0\n";
    poses << "1 0 0 1.0 0 1 0 0 0 0 1 0\n";
  }
  CHECK_THROWS_WITH_AS((void)load_kitti(dir.string(), 0, 3), doctest::Contains("line 2"),
                       std::runtime_error);
}
