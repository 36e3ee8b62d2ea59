#include "featureness/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace featureness {

GradCheckReport grad_check(Model& model, const LossFn& loss, double epsilon) {
  if (model.param_count() > 5000) {
    throw std::invalid_argument("grad_check: model exceeds the 5000-parameter cost bound");
  }
  if (model.dropout_active) {
    throw std::invalid_argument("grad_check: dropout must be disabled");
  }

  Grads analytic;
  analytic.init(model.params());
  loss(model, &analytic);

  GradCheckReport report;
  auto params = model.params();
  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<float>& w = *params[i].values;
    for (size_t j = 0; j < w.size(); ++j) {
      const float original = w[j];
      const float plus = static_cast<float>(double(original) + epsilon);
      const float minus = static_cast<float>(double(original) - epsilon);

      w[j] = plus;
      const double lp = loss(model, nullptr);
      w[j] = minus;
      const double lm = loss(model, nullptr);
      w[j] = original;

      // Divide by the realized float step, not the nominal epsilon.
      const double step = double(plus) - double(minus);
      const double fd = (lp - lm) / step;
      const double bp = analytic.g[i][j];
      const double rel = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-8});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[i].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return report;
}

}  // namespace featureness
