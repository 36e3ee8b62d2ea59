#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "featureness/checkpoint.hpp"
#include "featureness/config.hpp"
#include "featureness/image_io.hpp"

namespace fs = std::filesystem;
using namespace featureness;

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 1;
  std::string out_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration");
  cmd->add_option("--seed", args.seed, "Root seed for all randomness");
  cmd->add_option("--out", args.out_override, "Output directory (overrides config out_dir)");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  return cfg;
}

void kv(const std::string& key, const std::string& value) {
  std::cout << key << "=" << value << "\n";
}
void kv(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  kv(key, std::string(buf));
}

std::string stage1_path(const RunConfig& cfg) { return (fs::path(cfg.out_dir) / "stage1.ckpt").string(); }
std::string stage2_path(const RunConfig& cfg) { return (fs::path(cfg.out_dir) / "stage2.ckpt").string(); }
std::string uhead_path(const RunConfig& cfg) { return (fs::path(cfg.out_dir) / "uhead.ckpt").string(); }

void require_checkpoint(const std::string& path, const std::string& needed_for) {
  if (!fs::exists(path)) {
    throw std::runtime_error("missing prerequisite checkpoint " + path + " (required for " +
                             needed_for + "); run the earlier training stage first");
  }
}

int cmd_gen_data(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  fs::create_directories(cfg.out_dir);
  Rng root(args.seed);

  // The corpus written here is byte-identical to what the training stages
  // regenerate internally from the same seed.
  Rng corpus_rng = root.derive("stage1").derive("corpus");
  const Corpus corpus = build_corpus(corpus_config_from(cfg), corpus_rng);
  const fs::path corpus_dir = fs::path(cfg.out_dir) / "corpus";
  fs::create_directories(corpus_dir);
  for (size_t i = 0; i < corpus.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04zu.png", i);
    write_png_gray((corpus_dir / name).string(), corpus.images[i]);
  }

  Rng seq_rng = root.derive("sequence");
  const SceneSequence seq = render_sequence(render_config_from(cfg), seq_rng);
  const fs::path seq_dir = fs::path(cfg.out_dir) / "sequence";
  save_kitti(seq_dir.string(), seq);

  kv("corpus_images", std::to_string(corpus.images.size()));
  kv("corpus_dir", corpus_dir.string());
  kv("sequence_frames", std::to_string(seq.frames.size()));
  kv("sequence_dir", seq_dir.string());
  return 0;
}

int cmd_train(const CommonArgs& args, int stage) {
  const RunConfig cfg = resolve_config(args);
  fs::create_directories(cfg.out_dir);
  Rng root(args.seed);

  if (stage == 1) {
    Rng rng = root.derive("stage1");
    Stage1Result res = train_stage1(corpus_config_from(cfg), train_config_from(cfg.train1), rng);
    save_checkpoint(res.model, stage1_path(cfg));
    res.metrics.save_csv((fs::path(cfg.out_dir) / "metrics_stage1.csv").string());
    kv("stage", "1");
    kv("checkpoint", stage1_path(cfg));
    if (!res.metrics.rows.empty()) {
      kv("final_loss", res.metrics.rows.back()[1]);
      kv("roundtrip_success", res.metrics.rows.back()[4]);
    }
  } else if (stage == 2) {
    require_checkpoint(stage1_path(cfg), "stage 2");
    const Model stage1 = load_checkpoint(stage1_path(cfg));
    const BayesConfig bayes = bayes_config_from(cfg.train2);
    const Model converted = bayesify(stage1, bayes);

    TrainConfig tc = train_config_from(cfg.train1);
    tc.epochs = cfg.train2.epochs;
    tc.lr = cfg.train2.lr;
    Rng rng = root.derive("stage2");
    Stage2Result res = train_stage2(converted, bayes, corpus_config_from(cfg), tc, rng);
    save_checkpoint(res.model, stage2_path(cfg));
    res.metrics.save_csv((fs::path(cfg.out_dir) / "metrics_stage2.csv").string());
    kv("stage", "2");
    kv("checkpoint", stage2_path(cfg));
    if (!res.metrics.rows.empty()) kv("final_loss", res.metrics.rows.back()[1]);
  } else if (stage == 3) {
    require_checkpoint(stage1_path(cfg), "stage 3");
    require_checkpoint(stage2_path(cfg), "stage 3");
    const Model detector = load_checkpoint(stage1_path(cfg));
    const Model bayes_model = load_checkpoint(stage2_path(cfg));

    Rng rng = root.derive("stage3");
    Stage3Config sc = stage3_config_from(cfg.train3);
    sc.mc_seed = root.derive("stage3_targets").seed();
    Stage3Result res = train_stage3(detector, bayes_model, corpus_config_from(cfg), sc, rng);
    save_uhead(res.head, uhead_path(cfg), stage1_path(cfg));
    res.metrics.save_csv((fs::path(cfg.out_dir) / "metrics_stage3.csv").string());
    kv("stage", "3");
    kv("checkpoint", uhead_path(cfg));
    kv("holdout_pearson", res.holdout_pearson);
  } else {
    throw std::runtime_error("train: stage must be 1, 2 or 3");
  }
  return 0;
}

int cmd_infer(const CommonArgs& args, const std::string& image_path, std::string detector_path,
              std::string uhead_path_arg, double p_t, double sigma_t,
              const std::string& prob_mode) {
  const RunConfig cfg = resolve_config(args);
  if (detector_path.empty()) detector_path = stage1_path(cfg);
  if (uhead_path_arg.empty()) uhead_path_arg = uhead_path(cfg);
  require_checkpoint(detector_path, "inference");
  require_checkpoint(uhead_path_arg, "inference");

  const Model detector = load_checkpoint(detector_path);
  const UncertaintyHead head = load_uhead(uhead_path_arg, detector_path);
  const Image img = load_image_gray(image_path);

  RunConfig::FeaturenessSection fsec = cfg.featureness;
  if (p_t >= 0.0) fsec.p_t = p_t;
  if (sigma_t >= 0.0) fsec.sigma_t = sigma_t;
  if (!prob_mode.empty()) fsec.prob_mode = prob_mode;
  const Thresholds thr = thresholds_from_config(fsec);

  const FeaturenessMaps maps = compute_featureness(detector, head, img, thr);
  const fs::path out = fs::path(cfg.out_dir) / "heatmaps";
  export_heatmaps(maps, out.string());

  kv("heatmap_dir", out.string());
  kv("p_t", thr.p_t);
  kv("sigma_t", thr.sigma_t);
  kv("prob_mode", thr.strict() ? "strict" : "inclusive");
  kv("mask_area", mask_area(maps.F));
  return 0;
}

int cmd_vo(const CommonArgs& args, const std::string& sequence_dir, const std::string& mode,
           std::string feature, double p_t, double sigma_t, int first, int last,
           bool no_timing, std::string detector_path, std::string uhead_path_arg) {
  const RunConfig cfg = resolve_config(args);
  fs::create_directories(cfg.out_dir);

  if (last < 0) {
    int count = 0;
    while (true) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.png", count);
      if (!fs::exists(fs::path(sequence_dir) / "image_0" / name)) break;
      ++count;
    }
    last = count;
  }
  const SceneSequence seq = load_kitti(sequence_dir, first, last);

  VOConfig vc = vo_config_from(cfg, args.seed);
  if (!feature.empty()) vc.frontend.feature = feature_kind_from_name(feature);
  vc.measure_time = !no_timing;

  const bool featureness_on = mode == "on";
  if (mode != "on" && mode != "off") {
    throw std::runtime_error("vo: --featureness must be on or off");
  }

  Model detector;
  UncertaintyHead head;
  FeaturenessFilter filter;
  const bool need_model = featureness_on || vc.frontend.feature == FeatureKind::learned;
  if (need_model) {
    if (detector_path.empty()) detector_path = stage1_path(cfg);
    require_checkpoint(detector_path, "vo");
    detector = load_checkpoint(detector_path);
    if (vc.frontend.feature == FeatureKind::learned) vc.frontend.learned_model = &detector;
  }
  if (featureness_on) {
    if (uhead_path_arg.empty()) uhead_path_arg = uhead_path(cfg);
    require_checkpoint(uhead_path_arg, "vo with featureness");
    head = load_uhead(uhead_path_arg, detector_path);

    RunConfig::FeaturenessSection fsec = cfg.featureness;
    if (p_t >= 0.0) fsec.p_t = p_t;
    if (sigma_t >= 0.0) fsec.sigma_t = sigma_t;
    filter.detector = &detector;
    filter.head = &head;
    filter.thresholds = thresholds_from_config(fsec);
  }

  const VOResult result = run_vo(seq, vc, featureness_on ? &filter : nullptr);

  const std::string tag = feature_kind_name(vc.frontend.feature) + (featureness_on ? "_on" : "_off");
  const std::string traj_path = (fs::path(cfg.out_dir) / ("traj_" + tag + ".csv")).string();
  const std::string report_path = (fs::path(cfg.out_dir) / ("report_" + tag + ".json")).string();
  save_trajectory_csv(traj_path, result.trajectory);
  save_report_json(report_path, result.report);

  kv("feature", result.report.feature_name);
  kv("featureness", featureness_on ? "on" : "off");
  kv("frames", std::to_string(result.report.frames));
  kv("failed_frames", std::to_string(result.report.failed_frames));
  kv("rmse_m", result.report.rmse_m);
  kv("rmse_unaligned_m", result.report.rmse_unaligned_m);
  kv("mean_frame_time_ms", result.report.mean_frame_time_ms);
  kv("kp_mean", result.report.kp_mean);
  if (featureness_on) kv("f_area_mean_pct", result.report.f_area_mean_pct);
  kv("trajectory", traj_path);
  kv("report", report_path);

  // Paired invocation: an off-run report alongside enables the comparison row.
  if (featureness_on) {
    const std::string off_path =
        (fs::path(cfg.out_dir) / ("report_" + feature_kind_name(vc.frontend.feature) + "_off.json"))
            .string();
    if (fs::exists(off_path)) {
      const VOReport off = load_report_json(off_path);
      kv("kp_reduction_pct", reduction_pct(off.kp_mean, result.report.kp_mean));
      kv("rmse_off_m", off.rmse_m);
    }
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& csv_path) {
  std::vector<VOReport> reports;
  for (const auto& path : inputs) reports.push_back(load_report_json(path));

  struct Row {
    std::string label;
    double rmse, time_ms, kp_mean;
    double reduction = -1.0;  // negative = blank
  };
  std::vector<Row> rows;
  for (const VOReport& r : reports) {
    Row row{r.feature_name + (r.featureness_on ? " + featureness" : ""), r.rmse_m,
            r.mean_frame_time_ms, r.kp_mean, -1.0};
    if (r.featureness_on) {
      for (const VOReport& base : reports) {
        if (!base.featureness_on && base.feature_name == r.feature_name) {
          row.reduction = reduction_pct(base.kp_mean, r.kp_mean);
          break;
        }
      }
    }
    rows.push_back(row);
  }

  std::printf("%-28s %12s %12s %12s %12s\n", "Feature", "RMSE (m)", "Time (ms)", "KP_mean",
              "KP_mean^%");
  for (const Row& row : rows) {
    if (row.reduction >= 0.0) {
      std::printf("%-28s %12.4f %12.2f %12.2f %12.2f\n", row.label.c_str(), row.rmse,
                  row.time_ms, row.kp_mean, row.reduction);
    } else {
      std::printf("%-28s %12.4f %12.2f %12.2f %12s\n", row.label.c_str(), row.rmse, row.time_ms,
                  row.kp_mean, "");
    }
  }

  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write report CSV: " + csv_path);
    out << "feature,rmse_m,time_ms,kp_mean,kp_reduction_pct\n";
    char buf[256];
    for (const Row& row : rows) {
      if (row.reduction >= 0.0) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g\n", row.label.c_str(),
                      row.rmse, row.time_ms, row.kp_mean, row.reduction);
      } else {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,\n", row.label.c_str(), row.rmse,
                      row.time_ms, row.kp_mean);
      }
      out << buf;
    }
    kv("csv", csv_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"featureness: per-pixel visual utility estimation and VO evaluation"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, infer_args, vo_args;

  auto* gen = app.add_subcommand("gen-data", "Generate the training corpus and a rendered "
                                             "sequence in KITTI layout");
  add_common(gen, gen_args);

  auto* train = app.add_subcommand("train", "Run one training stage (1: detector, 2: Bayesian, "
                                            "3: uncertainty head)");
  int stage = 0;
  train->add_option("--stage", stage, "Training stage")->required();
  add_common(train, train_args);

  auto* infer = app.add_subcommand("infer", "Compute P/U/F heatmaps for one image");
  std::string image_path, infer_detector, infer_uhead, infer_prob_mode;
  double infer_pt = -1.0, infer_sigmat = -1.0;
  infer->add_option("--image", image_path, "Input image (PNG or PGM)")->required();
  infer->add_option("--detector", infer_detector, "Stage-1 checkpoint");
  infer->add_option("--uhead", infer_uhead, "Stage-3 checkpoint");
  infer->add_option("--p-t", infer_pt, "Probability tolerance");
  infer->add_option("--sigma-t", infer_sigmat, "Uncertainty tolerance");
  infer->add_option("--prob-mode", infer_prob_mode, "auto|inclusive|strict");
  add_common(infer, infer_args);

  auto* vo = app.add_subcommand("vo", "Run monocular VO on a KITTI-layout sequence");
  std::string sequence_dir, vo_mode = "off", vo_feature, vo_detector, vo_uhead;
  double vo_pt = -1.0, vo_sigmat = -1.0;
  int vo_first = 0, vo_last = -1;
  bool vo_no_timing = false;
  vo->add_option("--sequence", sequence_dir, "Sequence directory")->required();
  vo->add_option("--featureness", vo_mode, "on|off")->required();
  vo->add_option("--feature", vo_feature, "fast|shi-tomasi|learned");
  vo->add_option("--p-t", vo_pt, "Probability tolerance");
  vo->add_option("--sigma-t", vo_sigmat, "Uncertainty tolerance");
  vo->add_option("--first", vo_first, "First frame (default 0)");
  vo->add_option("--last", vo_last, "Frame end, exclusive (default: all)");
  vo->add_flag("--no-timing", vo_no_timing, "Write zero timings (bit-stable reports)");
  vo->add_option("--detector", vo_detector, "Stage-1 checkpoint");
  vo->add_option("--uhead", vo_uhead, "Stage-3 checkpoint");
  add_common(vo, vo_args);

  auto* report = app.add_subcommand("report", "Tabulate VO report JSONs");
  std::vector<std::string> report_inputs;
  std::string report_csv;
  report->add_option("inputs", report_inputs, "Report JSON files")->required();
  report->add_option("--csv", report_csv, "Also write a CSV table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train->parsed()) return cmd_train(train_args, stage);
    if (infer->parsed()) {
      return cmd_infer(infer_args, image_path, infer_detector, infer_uhead, infer_pt,
                       infer_sigmat, infer_prob_mode);
    }
    if (vo->parsed()) {
      return cmd_vo(vo_args, sequence_dir, vo_mode, vo_feature, vo_pt, vo_sigmat, vo_first,
                    vo_last, vo_no_timing, vo_detector, vo_uhead);
    }
    if (report->parsed()) return cmd_report(report_inputs, report_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
