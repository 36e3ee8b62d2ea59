#pragma once

#include "featureness/optim.hpp"

namespace featureness {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t checked = 0;
};

/// Compares backprop gradients against central finite differences on every
/// parameter. Relative error is |a - b| / max(|a|, |b|, 1e-8). The model must
/// be small (<= 5000 parameters) and the loss deterministic (dropout off).
GradCheckReport grad_check(Model& model, const LossFn& loss, double epsilon);

}  // namespace featureness
