#pragma once

#include <functional>
#include <optional>

#include "featureness/epipolar.hpp"
#include "featureness/featureness.hpp"
#include "featureness/kitti.hpp"
#include "featureness/matching.hpp"
#include "featureness/trajectory.hpp"

namespace featureness {

enum class FeatureKind { fast, shi_tomasi, learned };

std::string feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);

struct FrontendConfig {
  FeatureKind feature = FeatureKind::fast;
  double fast_threshold = 0.08;
  int fast_nms_radius = 5;
  int shi_window_half = 2;
  int shi_top_n = 1000;
  double shi_min_quality = 0.01;
  int learned_top_n = 600;
  int learned_nms_radius = 5;
  uint64_t brief_seed = 42;
  double ratio = 0.8;              // Lowe ratio for real-valued descriptors
  bool mutual = true;              // mutual-consistency for binary descriptors
  const Model* learned_model = nullptr;  // required for FeatureKind::learned
};

/// Featureness filtering stage: mask each frame once, drop keypoints at F = 0.
struct FeaturenessFilter {
  const Model* detector = nullptr;
  const UncertaintyHead* head = nullptr;
  Thresholds thresholds;
};

struct VOConfig {
  FrontendConfig frontend;
  double ransac_threshold_px = 3.0;  // converted to normalized units via fx
  int ransac_max_iters = 1000;
  double ransac_confidence = 0.999;
  uint64_t seed = 0;
  bool measure_time = true;  // false writes zero timings (bit-stable reports)
  double max_failed_frac = 0.2;
};

struct FrameRecord {
  int frame = 0;  // later frame of the pair
  double time_ms = 0;
  int kp_extracted = 0;  // detected before filtering
  int kp_used = 0;       // surviving filtering + descriptor border drop
  int matches = 0;
  int inliers = 0;
  bool failed = false;
  double f_area_pct = -1.0;  // -1 when featureness is off
};

struct VOReport {
  std::string feature_name;
  bool featureness_on = false;
  double p_t = 0.0, sigma_t = 0.0;
  int frames = 0;
  int failed_frames = 0;
  double rmse_m = 0.0;            // similarity-aligned (the reported default)
  double rmse_unaligned_m = 0.0;  // raw scale-injected
  double mean_frame_time_ms = 0.0;
  double kp_mean = 0.0;             // mean keypoints used per frame
  double kp_mean_extracted = 0.0;   // before filtering
  double f_area_mean_pct = -1.0;
  std::vector<FrameRecord> records;
};

struct VOResult {
  Trajectory trajectory;
  VOReport report;
};

/// Audit hook: invoked once per frame with the keypoints actually used and the
/// frame's featureness mask (null when filtering is off).
using FrameAudit =
    std::function<void(int frame, const std::vector<Keypoint>& used, const PixelMask* mask)>;

/// Frame-to-frame monocular VO with ground-truth scale injection. Per pair:
/// extract, (optionally) filter by featureness, match, essential-matrix RANSAC,
/// cheirality pose recovery, chain. On a per-frame failure the previous
/// relative motion is substituted and the event recorded; more than
/// max_failed_frac failed pairs aborts.
VOResult run_vo(const SceneSequence& seq, const VOConfig& config,
                const FeaturenessFilter* filter = nullptr, const FrameAudit* audit = nullptr);

void save_report_json(const std::string& path, const VOReport& report);
VOReport load_report_json(const std::string& path);

}  // namespace featureness
