#pragma once

#include "featureness/bayes.hpp"

namespace featureness {

/// Single-shot uncertainty head: maps backbone features plus the dense
/// probability map to a per-pixel value in [0, 1], where 0 is certain and 1 is
/// uncertain. Distilled from Monte-Carlo variance, consumed in one
/// deterministic forward pass.
class UncertaintyHead {
 public:
  struct Config {
    int feat_channels = 64;  // must match the detector backbone output
    int hidden = 16;
    uint64_t init_seed = 7;
  };

  UncertaintyHead() = default;
  static UncertaintyHead build(const Config& config);

  /// feat: (C, h, w) backbone features; prob: (1, h, w). Returns (1, h, w).
  Tensor infer(const Tensor& feat, const Tensor& prob) const;

  Tensor forward_cached(const Tensor& feat, const Tensor& prob,
                        std::vector<LayerCache>& caches) const;
  void backward(const Tensor& du, const std::vector<LayerCache>& caches, Grads& grads) const;

  std::vector<ParamView> params() { return net_.params(); }
  std::vector<ConstParamView> params() const { return net_.params(); }

  Config config;

 private:
  Sequential net_;
};

/// Scales MC variance into a [0, 1] training target by the analytic Bernoulli
/// bound: target = min(1, var / 0.25). Throws on negative variance.
Image variance_to_target(const VarianceMap& var);

struct Stage3Config {
  int epochs = 20;
  double lr = 1e-3;
  int mc_passes = 16;
  uint64_t mc_seed = 99;   // target sampling; held-out re-sampling derives from it
  int holdout_images = 8;
  int threads = 0;
  bool binarize_targets = false;  // comparison mode: threshold targets at 0.5
};

struct Stage3Result {
  UncertaintyHead head;
  MetricsLog metrics;  // epoch, bce, holdout_pearson
  double holdout_pearson = 0.0;
};

/// Stage 3: trains the head in isolation. Inputs (feat, prob) come from the
/// frozen deterministic detector; targets come from stage-2 MC variance,
/// precomputed once per image with a fixed seed. Soft-label BCE.
Stage3Result train_stage3(const Model& detector, const Model& bayes_model,
                          const CorpusConfig& corpus, const Stage3Config& config, Rng& rng);

/// Pearson correlation between a predicted map and a target map.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Mean soft-label binary cross-entropy between a predicted (1,h,w) map and a
/// target image.
double bce_mean(const Tensor& pred, const Image& target);

/// Stage-3 checkpoints store only head parameters plus the content hash of the
/// frozen detector checkpoint; loading verifies the hash and refuses
/// mismatched pairs.
void save_uhead(const UncertaintyHead& head, const std::string& path,
                const std::string& detector_checkpoint_path);
UncertaintyHead load_uhead(const std::string& path, const std::string& detector_checkpoint_path);

}  // namespace featureness
