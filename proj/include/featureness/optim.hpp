#pragma once

#include <functional>

#include "featureness/model.hpp"

namespace featureness {

/// Adam. Moment state is kept in double; parameters are re-quantized to
/// float32 after every update so checkpoints round-trip bit-exactly.
class Adam {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() : config_(Config{}) {}
  explicit Adam(const Config& config) : config_(config) {}

  void step(std::vector<ParamView> params, const Grads& grads);

  const Config& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  Config config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Loss callback: returns the scalar loss; when grads is non-null it must also
/// accumulate parameter gradients (grads arrives zeroed and sized).
using LossFn = std::function<double(const Model&, Grads*)>;

/// One optimization step: evaluate loss + gradients, apply Adam. Aborts on a
/// non-finite loss or gradient.
double train_step(Model& model, const LossFn& loss, Adam& optimizer);

}  // namespace featureness
