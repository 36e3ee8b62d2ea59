#pragma once

#include "featureness/detector.hpp"

namespace featureness {

struct BayesConfig {
  double dropout_rate = 0.2;
  double kl_beta = 1e-5;
  int mc_passes = 16;
};

/// Per-pixel variance of the stochastic probability predictions.
/// Probabilities live in [0, 1], so the population variance is bounded by the
/// Bernoulli maximum 0.25.
struct VarianceMap {
  int height = 0;
  int width = 0;
  std::vector<double> var;

  VarianceMap() = default;
  VarianceMap(int h, int w) : height(h), width(w), var(static_cast<size_t>(h) * w, 0.0) {}
  double& at(int y, int x) { return var[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return var[static_cast<size_t>(y) * width + x]; }
};

/// Monte-Carlo dropout conversion: inserts a dropout layer after each backbone
/// activation, preserving all trained parameters. Throws if the model already
/// carries dropout layers.
Model bayesify(const Model& model, const BayesConfig& config);

/// Dropout-posterior KL proxy: beta * sum of squared conv weights (biases
/// excluded).
double kl_proxy(const Model& model, double beta);

/// Adds the KL proxy gradient (2 * beta * w) to existing gradients.
void kl_proxy_grad(const Model& model, double beta, Grads& grads);

struct Stage2Result {
  Model model;
  MetricsLog metrics;  // epoch, total_loss, silk_loss, kl, roundtrip_success
};

/// Stage 2: retrains the Bayesian model with silk_loss + kl_proxy, dropout
/// active throughout.
Stage2Result train_stage2(const Model& bayes_model, const BayesConfig& bayes,
                          const CorpusConfig& corpus, const TrainConfig& train, Rng& rng);

/// T stochastic forward passes with dropout streams derived from
/// seed XOR pass index; returns the per-pixel mean probability and the
/// population (1/T) variance. Deterministic given (seed, T).
std::pair<Image, VarianceMap> mc_variance(const Model& model, const Image& image, int passes,
                                          uint64_t seed);

/// 32-bit float binary grid: "FVAR" magic, u32 height, u32 width, row-major
/// float data. The PNG export scales values by 4x for inspection (0.25 -> 255).
void save_variance_map(const std::string& path, const VarianceMap& map);
VarianceMap load_variance_map(const std::string& path);
void save_variance_png(const std::string& path, const VarianceMap& map);

}  // namespace featureness
