#include "featureness/vo.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace featureness {

namespace {

using Clock = std::chrono::steady_clock;

struct FrameFeatures {
  std::vector<Keypoint> keypoints;  // entering matching
  DescriptorSet descriptors;
  int extracted = 0;
  double f_area_pct = -1.0;
  PixelMask mask;  // empty when filtering is off
};

FrameFeatures extract_frame(const Image& img, const VOConfig& config,
                            const FeaturenessFilter* filter) {
  const FrontendConfig& fe = config.frontend;
  FrameFeatures out;

  std::vector<Keypoint> kps;
  LearnedFeatures learned;
  switch (fe.feature) {
    case FeatureKind::fast:
      kps = fast_detect(img, fe.fast_threshold, fe.fast_nms_radius);
      break;
    case FeatureKind::shi_tomasi:
      kps = shi_tomasi(img, fe.shi_window_half, fe.shi_top_n, fe.shi_min_quality);
      break;
    case FeatureKind::learned:
      if (!fe.learned_model) {
        throw std::invalid_argument("run_vo: learned features need frontend.learned_model");
      }
      learned = learned_detect_describe(*fe.learned_model, img, fe.learned_top_n,
                                        fe.learned_nms_radius);
      kps = learned.keypoints;
      break;
  }
  out.extracted = static_cast<int>(kps.size());

  std::vector<int> keep(kps.size());
  for (size_t i = 0; i < kps.size(); ++i) keep[i] = static_cast<int>(i);
  if (filter) {
    const FeaturenessMaps maps =
        compute_featureness(*filter->detector, *filter->head, img, filter->thresholds);
    out.f_area_pct = mask_area(maps.F);
    out.mask = maps.F;
    keep = filter_keypoint_indices(kps, maps.F);
  }

  if (fe.feature == FeatureKind::learned) {
    Eigen::MatrixXd descs(static_cast<Eigen::Index>(keep.size()), learned.descriptors.cols());
    for (size_t i = 0; i < keep.size(); ++i) {
      out.keypoints.push_back(kps[keep[i]]);
      descs.row(static_cast<Eigen::Index>(i)) = learned.descriptors.row(keep[i]);
    }
    out.descriptors = DescriptorSet::from_real(std::move(descs));
  } else {
    std::vector<Keypoint> filtered;
    for (const int i : keep) filtered.push_back(kps[i]);
    const BriefResult brief = brief_describe(img, filtered, fe.brief_seed);
    for (const int i : brief.kept) out.keypoints.push_back(filtered[i]);
    out.descriptors = DescriptorSet::from_binary(brief.descriptors);
  }
  return out;
}

}  // namespace

std::string feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::fast: return "fast";
    case FeatureKind::shi_tomasi: return "shi-tomasi";
    case FeatureKind::learned: return "learned";
  }
  return "unknown";
}

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "fast") return FeatureKind::fast;
  if (name == "shi-tomasi" || name == "shi_tomasi") return FeatureKind::shi_tomasi;
  if (name == "learned") return FeatureKind::learned;
  throw std::invalid_argument("unknown feature kind: " + name);
}

VOResult run_vo(const SceneSequence& seq, const VOConfig& config,
                const FeaturenessFilter* filter, const FrameAudit* audit) {
  const int n = static_cast<int>(seq.frames.size());
  if (n < 2) throw std::invalid_argument("run_vo: needs at least 2 frames");
  if (seq.intrinsics.fx <= 0 || seq.intrinsics.fy <= 0) {
    throw std::invalid_argument("run_vo: missing camera intrinsics");
  }
  if (static_cast<int>(seq.poses_gt.size()) != n) {
    throw std::invalid_argument("run_vo: pose/frame count mismatch");
  }
  if (filter && (!filter->detector || !filter->head)) {
    throw std::invalid_argument("run_vo: featureness filter needs detector and head");
  }

  const CameraIntrinsics& K = seq.intrinsics;
  const MatchConfig binary_match{true, std::nullopt};
  const MatchConfig float_match{false, config.frontend.ratio};
  const bool is_binary = config.frontend.feature != FeatureKind::learned;

  VOResult result;
  result.report.feature_name = feature_kind_name(config.frontend.feature);
  result.report.featureness_on = filter != nullptr;
  if (filter) {
    result.report.p_t = filter->thresholds.p_t;
    result.report.sigma_t = filter->thresholds.sigma_t;
  }
  result.report.frames = n;
  result.trajectory.push_back(Pose::identity());

  Rng seed_rng(config.seed);

  FrameFeatures prev = extract_frame(seq.frames[0], config, filter);
  if (audit) (*audit)(0, prev.keypoints, filter ? &prev.mask : nullptr);

  // Constant-velocity fallback state.
  Pose last_rel = Pose::identity();

  double kp_used_sum = prev.keypoints.size();
  double kp_extracted_sum = prev.extracted;
  double f_area_sum = filter ? prev.f_area_pct : 0.0;
  double time_sum_ms = 0.0;

  for (int k = 1; k < n; ++k) {
    const auto t0 = Clock::now();

    FrameFeatures cur = extract_frame(seq.frames[k], config, filter);
    if (audit) (*audit)(k, cur.keypoints, filter ? &cur.mask : nullptr);

    FrameRecord rec;
    rec.frame = k;
    rec.kp_extracted = cur.extracted;
    rec.kp_used = static_cast<int>(cur.keypoints.size());
    rec.f_area_pct = cur.f_area_pct;

    const std::vector<Match> matches =
        match(prev.descriptors, cur.descriptors, is_binary ? binary_match : float_match);
    rec.matches = static_cast<int>(matches.size());

    // Ground-truth scale for the monocular translation.
    const Pose gt_rel = seq.poses_gt[k - 1].inverse() * seq.poses_gt[k];
    const double gt_scale = gt_rel.t.norm();

    Pose rel;
    bool ok = false;
    if (rec.matches >= 8 && gt_scale > 1e-12) {
      std::vector<Eigen::Vector2d> pa, pb;
      pa.reserve(matches.size());
      pb.reserve(matches.size());
      for (const Match& m : matches) {
        const Keypoint& ka = prev.keypoints[m.a];
        const Keypoint& kb = cur.keypoints[m.b];
        pa.emplace_back((ka.x - K.cx) / K.fx, (ka.y - K.cy) / K.fy);
        pb.emplace_back((kb.x - K.cx) / K.fx, (kb.y - K.cy) / K.fy);
      }
      RansacConfig rc;
      rc.threshold = config.ransac_threshold_px / K.fx;
      rc.max_iters = config.ransac_max_iters;
      rc.confidence = config.ransac_confidence;
      rc.seed = seed_rng.derive(static_cast<uint64_t>(k)).seed();
      try {
        const RansacResult rr = estimate_essential_ransac(pa, pb, rc);
        rec.inliers = static_cast<int>(rr.inliers.size());
        std::vector<Eigen::Vector2d> ia, ib;
        for (const int idx : rr.inliers) {
          ia.push_back(pa[idx]);
          ib.push_back(pb[idx]);
        }
        const RelativePose rp = recover_pose(rr.essential, ia, ib);
        // rp maps previous-frame coordinates onto current-frame ones; the
        // camera-to-world chain needs the inverse, scaled to ground truth.
        rel.R = rp.rotation.transpose();
        rel.t = -(rp.rotation.transpose() * rp.translation) * gt_scale;
        ok = true;
      } catch (const std::runtime_error&) {
        ok = false;
      }
    }

    if (!ok) {
      rec.failed = true;
      ++result.report.failed_frames;
      rel = last_rel;  // constant-velocity substitution
    }
    last_rel = rel;
    result.trajectory.push_back(result.trajectory.back() * rel);

    const auto t1 = Clock::now();
    rec.time_ms = config.measure_time
                      ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                      : 0.0;
    time_sum_ms += rec.time_ms;
    kp_used_sum += rec.kp_used;
    kp_extracted_sum += rec.kp_extracted;
    if (filter) f_area_sum += rec.f_area_pct;
    result.report.records.push_back(rec);
  }

  const int pairs = n - 1;
  if (result.report.failed_frames > config.max_failed_frac * pairs) {
    throw tracking_failure_error(
        "run_vo: " + std::to_string(result.report.failed_frames) + "/" + std::to_string(pairs) +
        " frame pairs failed (limit " + std::to_string(config.max_failed_frac * 100) + "%)");
  }

  result.report.rmse_m = align_and_rmse(result.trajectory, seq.poses_gt, AlignMode::similarity);
  result.report.rmse_unaligned_m =
      align_and_rmse(result.trajectory, seq.poses_gt, AlignMode::none);
  result.report.mean_frame_time_ms = time_sum_ms / pairs;
  result.report.kp_mean = kp_used_sum / n;
  result.report.kp_mean_extracted = kp_extracted_sum / n;
  result.report.f_area_mean_pct = filter ? f_area_sum / n : -1.0;
  return result;
}

void save_report_json(const std::string& path, const VOReport& report) {
  nlohmann::json j;
  j["feature"] = report.feature_name;
  j["featureness_on"] = report.featureness_on;
  j["p_t"] = report.p_t;
  j["sigma_t"] = report.sigma_t;
  j["frames"] = report.frames;
  j["failed_frames"] = report.failed_frames;
  j["rmse_m"] = report.rmse_m;
  j["rmse_unaligned_m"] = report.rmse_unaligned_m;
  j["mean_frame_time_ms"] = report.mean_frame_time_ms;
  j["kp_mean"] = report.kp_mean;
  j["kp_mean_extracted"] = report.kp_mean_extracted;
  j["f_area_mean_pct"] = report.f_area_mean_pct;
  nlohmann::json recs = nlohmann::json::array();
  for (const FrameRecord& r : report.records) {
    recs.push_back({{"frame", r.frame},
                    {"time_ms", r.time_ms},
                    {"kp_extracted", r.kp_extracted},
                    {"kp_used", r.kp_used},
                    {"matches", r.matches},
                    {"inliers", r.inliers},
                    {"failed", r.failed},
                    {"f_area_pct", r.f_area_pct}});
  }
  j["records"] = std::move(recs);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write VO report: " + path);
  out << j.dump(2) << '\n';
}

VOReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read VO report: " + path);
  nlohmann::json j;
  in >> j;

  VOReport report;
  report.feature_name = j.at("feature").get<std::string>();
  report.featureness_on = j.at("featureness_on").get<bool>();
  report.p_t = j.at("p_t").get<double>();
  report.sigma_t = j.at("sigma_t").get<double>();
  report.frames = j.at("frames").get<int>();
  report.failed_frames = j.at("failed_frames").get<int>();
  report.rmse_m = j.at("rmse_m").get<double>();
  report.rmse_unaligned_m = j.at("rmse_unaligned_m").get<double>();
  report.mean_frame_time_ms = j.at("mean_frame_time_ms").get<double>();
  report.kp_mean = j.at("kp_mean").get<double>();
  report.kp_mean_extracted = j.at("kp_mean_extracted").get<double>();
  report.f_area_mean_pct = j.at("f_area_mean_pct").get<double>();
  for (const auto& r : j.at("records")) {
    FrameRecord rec;
    rec.frame = r.at("frame").get<int>();
    rec.time_ms = r.at("time_ms").get<double>();
    rec.kp_extracted = r.at("kp_extracted").get<int>();
    rec.kp_used = r.at("kp_used").get<int>();
    rec.matches = r.at("matches").get<int>();
    rec.inliers = r.at("inliers").get<int>();
    rec.failed = r.at("failed").get<bool>();
    rec.f_area_pct = r.at("f_area_pct").get<double>();
    report.records.push_back(rec);
  }
  return report;
}

}  // namespace featureness
