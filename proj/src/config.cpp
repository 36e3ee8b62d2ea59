#include "featureness/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace featureness {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                const std::string& section) {
  if (!j.is_object()) throw std::runtime_error("config section " + section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::runtime_error("unknown config key \"" + key + "\" in " + section);
    }
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir) {
  RunConfig cfg;
  check_keys(j, {"data", "train1", "train2", "train3", "featureness", "vo", "out_dir"}, "root");

  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d,
               {"corpus_images", "corpus_image_size", "holdout_pairs", "sequence_frames",
                "sequence_width", "sequence_height", "focal", "forward_speed", "yaw_rate",
                "zone_enabled", "zone_x", "zone_y", "zone_w", "zone_h", "zone_mode"},
               "data");
    get_if(d, "corpus_images", cfg.data.corpus_images);
    get_if(d, "corpus_image_size", cfg.data.corpus_image_size);
    get_if(d, "holdout_pairs", cfg.data.holdout_pairs);
    get_if(d, "sequence_frames", cfg.data.sequence_frames);
    get_if(d, "sequence_width", cfg.data.sequence_width);
    get_if(d, "sequence_height", cfg.data.sequence_height);
    get_if(d, "focal", cfg.data.focal);
    get_if(d, "forward_speed", cfg.data.forward_speed);
    get_if(d, "yaw_rate", cfg.data.yaw_rate);
    get_if(d, "zone_enabled", cfg.data.zone_enabled);
    get_if(d, "zone_x", cfg.data.zone_x);
    get_if(d, "zone_y", cfg.data.zone_y);
    get_if(d, "zone_w", cfg.data.zone_w);
    get_if(d, "zone_h", cfg.data.zone_h);
    get_if(d, "zone_mode", cfg.data.zone_mode);
  }
  if (j.contains("train1")) {
    const auto& t = j.at("train1");
    check_keys(t, {"epochs", "batch_pairs", "crop", "correspondences", "lr", "tau", "lambda_kp",
                   "threads"},
               "train1");
    get_if(t, "epochs", cfg.train1.epochs);
    get_if(t, "batch_pairs", cfg.train1.batch_pairs);
    get_if(t, "crop", cfg.train1.crop);
    get_if(t, "correspondences", cfg.train1.correspondences);
    get_if(t, "lr", cfg.train1.lr);
    get_if(t, "tau", cfg.train1.tau);
    get_if(t, "lambda_kp", cfg.train1.lambda_kp);
    get_if(t, "threads", cfg.train1.threads);
  }
  if (j.contains("train2")) {
    const auto& t = j.at("train2");
    check_keys(t, {"epochs", "lr", "dropout_rate", "kl_beta", "mc_passes"}, "train2");
    get_if(t, "epochs", cfg.train2.epochs);
    get_if(t, "lr", cfg.train2.lr);
    get_if(t, "dropout_rate", cfg.train2.dropout_rate);
    get_if(t, "kl_beta", cfg.train2.kl_beta);
    get_if(t, "mc_passes", cfg.train2.mc_passes);
  }
  if (j.contains("train3")) {
    const auto& t = j.at("train3");
    check_keys(t, {"epochs", "lr", "mc_passes", "holdout_images", "binarize_targets"}, "train3");
    get_if(t, "epochs", cfg.train3.epochs);
    get_if(t, "lr", cfg.train3.lr);
    get_if(t, "mc_passes", cfg.train3.mc_passes);
    get_if(t, "holdout_images", cfg.train3.holdout_images);
    get_if(t, "binarize_targets", cfg.train3.binarize_targets);
  }
  if (j.contains("featureness")) {
    const auto& f = j.at("featureness");
    check_keys(f, {"p_t", "sigma_t", "prob_mode"}, "featureness");
    get_if(f, "p_t", cfg.featureness.p_t);
    get_if(f, "sigma_t", cfg.featureness.sigma_t);
    get_if(f, "prob_mode", cfg.featureness.prob_mode);
  }
  if (j.contains("vo")) {
    const auto& v = j.at("vo");
    check_keys(v,
               {"feature", "fast_threshold", "fast_nms_radius", "shi_window_half", "shi_top_n",
                "shi_min_quality", "learned_top_n", "learned_nms_radius", "ratio",
                "ransac_threshold_px", "ransac_max_iters", "ransac_confidence"},
               "vo");
    get_if(v, "feature", cfg.vo.feature);
    get_if(v, "fast_threshold", cfg.vo.fast_threshold);
    get_if(v, "fast_nms_radius", cfg.vo.fast_nms_radius);
    get_if(v, "shi_window_half", cfg.vo.shi_window_half);
    get_if(v, "shi_top_n", cfg.vo.shi_top_n);
    get_if(v, "shi_min_quality", cfg.vo.shi_min_quality);
    get_if(v, "learned_top_n", cfg.vo.learned_top_n);
    get_if(v, "learned_nms_radius", cfg.vo.learned_nms_radius);
    get_if(v, "ratio", cfg.vo.ratio);
    get_if(v, "ransac_threshold_px", cfg.vo.ransac_threshold_px);
    get_if(v, "ransac_max_iters", cfg.vo.ransac_max_iters);
    get_if(v, "ransac_confidence", cfg.vo.ransac_confidence);
  }
  get_if(j, "out_dir", cfg.out_dir);
  if (!base_dir.empty() && fs::path(cfg.out_dir).is_relative()) {
    cfg.out_dir = (fs::path(base_dir) / cfg.out_dir).string();
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
  }
  return parse_run_config(j, fs::path(path).parent_path().string());
}

Thresholds thresholds_from_config(const RunConfig::FeaturenessSection& cfg) {
  Thresholds t;
  t.p_t = cfg.p_t;
  t.sigma_t = cfg.sigma_t;
  if (cfg.prob_mode == "auto") {
    t.prob_mode = ProbMode::automatic;
  } else if (cfg.prob_mode == "inclusive") {
    t.prob_mode = ProbMode::inclusive;
  } else if (cfg.prob_mode == "strict") {
    t.prob_mode = ProbMode::strict;
  } else {
    throw std::runtime_error("featureness.prob_mode must be auto|inclusive|strict, got " +
                             cfg.prob_mode);
  }
  return t;
}

RenderConfig render_config_from(const RunConfig& cfg) {
  RenderConfig rc;
  rc.frames = cfg.data.sequence_frames;
  rc.width = cfg.data.sequence_width;
  rc.height = cfg.data.sequence_height;
  rc.focal = cfg.data.focal;
  rc.forward_speed = cfg.data.forward_speed;
  rc.yaw_rate = cfg.data.yaw_rate;
  if (cfg.data.zone_enabled) {
    UnreliableZone zone;
    zone.x_frac = cfg.data.zone_x;
    zone.y_frac = cfg.data.zone_y;
    zone.w_frac = cfg.data.zone_w;
    zone.h_frac = cfg.data.zone_h;
    if (cfg.data.zone_mode == "noise") {
      zone.mode = UnreliableZone::Mode::noise;
    } else if (cfg.data.zone_mode == "uniform") {
      zone.mode = UnreliableZone::Mode::uniform;
    } else {
      throw std::runtime_error("data.zone_mode must be noise|uniform, got " + cfg.data.zone_mode);
    }
    rc.zones.push_back(zone);
  }
  return rc;
}

CorpusConfig corpus_config_from(const RunConfig& cfg) {
  CorpusConfig cc;
  cc.images = cfg.data.corpus_images;
  cc.image_size = cfg.data.corpus_image_size;
  cc.holdout_pairs = cfg.data.holdout_pairs;
  return cc;
}

TrainConfig train_config_from(const RunConfig::Train1& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_pairs = cfg.batch_pairs;
  tc.crop = cfg.crop;
  tc.correspondences = cfg.correspondences;
  tc.lr = cfg.lr;
  tc.tau = cfg.tau;
  tc.lambda_kp = cfg.lambda_kp;
  tc.threads = cfg.threads;
  return tc;
}

BayesConfig bayes_config_from(const RunConfig::Train2& cfg) {
  BayesConfig bc;
  bc.dropout_rate = cfg.dropout_rate;
  bc.kl_beta = cfg.kl_beta;
  bc.mc_passes = cfg.mc_passes;
  return bc;
}

Stage3Config stage3_config_from(const RunConfig::Train3& cfg) {
  Stage3Config sc;
  sc.epochs = cfg.epochs;
  sc.lr = cfg.lr;
  sc.mc_passes = cfg.mc_passes;
  sc.holdout_images = cfg.holdout_images;
  sc.binarize_targets = cfg.binarize_targets;
  return sc;
}

VOConfig vo_config_from(const RunConfig& cfg, uint64_t seed) {
  VOConfig vc;
  vc.frontend.feature = feature_kind_from_name(cfg.vo.feature);
  vc.frontend.fast_threshold = cfg.vo.fast_threshold;
  vc.frontend.fast_nms_radius = cfg.vo.fast_nms_radius;
  vc.frontend.shi_window_half = cfg.vo.shi_window_half;
  vc.frontend.shi_top_n = cfg.vo.shi_top_n;
  vc.frontend.shi_min_quality = cfg.vo.shi_min_quality;
  vc.frontend.learned_top_n = cfg.vo.learned_top_n;
  vc.frontend.learned_nms_radius = cfg.vo.learned_nms_radius;
  vc.frontend.ratio = cfg.vo.ratio;
  vc.ransac_threshold_px = cfg.vo.ransac_threshold_px;
  vc.ransac_max_iters = cfg.vo.ransac_max_iters;
  vc.ransac_confidence = cfg.vo.ransac_confidence;
  vc.seed = seed;
  return vc;
}

}  // namespace featureness
