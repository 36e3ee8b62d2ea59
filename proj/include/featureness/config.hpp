#pragma once

#include <string>

#include "json.hpp"

#include "featureness/bayes.hpp"
#include "featureness/render.hpp"
#include "featureness/uncertainty_head.hpp"
#include "featureness/vo.hpp"

namespace featureness {

/// Whole-pipeline configuration. Every field has a default; unknown JSON keys
/// are rejected; relative paths resolve against the config file's directory.
struct RunConfig {
  struct Data {
    int corpus_images = 256;
    int corpus_image_size = 128;
    int holdout_pairs = 16;
    int sequence_frames = 100;
    int sequence_width = 320;
    int sequence_height = 240;
    double focal = 260.0;
    double forward_speed = 0.1;
    double yaw_rate = 0.005;
    bool zone_enabled = false;
    double zone_x = 0.40, zone_y = 0.30, zone_w = 0.45, zone_h = 0.45;
    std::string zone_mode = "noise";
  } data;

  struct Train1 {
    int epochs = 30;
    int batch_pairs = 4;
    int crop = 96;
    int correspondences = 512;
    double lr = 1e-3;
    double tau = 0.1;
    double lambda_kp = 1.0;
    int threads = 0;
  } train1;

  struct Train2 {
    int epochs = 10;
    double lr = 5e-4;
    double dropout_rate = 0.2;
    double kl_beta = 1e-5;
    int mc_passes = 16;
  } train2;

  struct Train3 {
    int epochs = 20;
    double lr = 1e-3;
    int mc_passes = 16;
    int holdout_images = 8;
    bool binarize_targets = false;
  } train3;

  struct FeaturenessSection {
    double p_t = 0.0;
    double sigma_t = 0.15;
    std::string prob_mode = "auto";  // auto | inclusive | strict
  } featureness;

  struct VOSection {
    std::string feature = "fast";
    double fast_threshold = 0.08;
    int fast_nms_radius = 5;
    int shi_window_half = 2;
    int shi_top_n = 1000;
    double shi_min_quality = 0.01;
    int learned_top_n = 600;
    int learned_nms_radius = 5;
    double ratio = 0.8;
    double ransac_threshold_px = 3.0;
    int ransac_max_iters = 1000;
    double ransac_confidence = 0.999;
  } vo;

  std::string out_dir = "out";  // resolved relative to the config file
};

RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

Thresholds thresholds_from_config(const RunConfig::FeaturenessSection& cfg);
RenderConfig render_config_from(const RunConfig& cfg);
CorpusConfig corpus_config_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig::Train1& cfg);
BayesConfig bayes_config_from(const RunConfig::Train2& cfg);
Stage3Config stage3_config_from(const RunConfig::Train3& cfg);
VOConfig vo_config_from(const RunConfig& cfg, uint64_t seed);

}  // namespace featureness
