#include "featureness/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace featureness {

void Adam::step(std::vector<ParamView> params, const Grads& grads) {
  if (grads.g.size() != params.size()) {
    throw std::invalid_argument("Adam::step: gradient layout mismatch");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].values->size(), 0.0);
      v_[i].assign(params[i].values->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, t_);

  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<float>& w = *params[i].values;
    const std::vector<double>& g = grads.g[i];
    if (g.size() != w.size()) throw std::invalid_argument("Adam::step: size mismatch");
    for (size_t j = 0; j < w.size(); ++j) {
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g[j];
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      const double next = double(w[j]) - config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      w[j] = static_cast<float>(next);
    }
  }
}

double train_step(Model& model, const LossFn& loss, Adam& optimizer) {
  Grads grads;
  grads.init(model.params());
  const double value = loss(model, &grads);
  if (!std::isfinite(value)) {
    throw std::runtime_error("train_step: non-finite loss");
  }
  for (const auto& gi : grads.g) {
    for (const double g : gi) {
      if (!std::isfinite(g)) throw std::runtime_error("train_step: non-finite gradient");
    }
  }
  optimizer.step(model.params(), grads);
  return value;
}

}  // namespace featureness
