#include "dvs/optim.hpp"

#include <cmath>

namespace dvs::train {

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0f);
    state.v.assign(params.size(), 0.0f);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double update = lr * (m / c1) / (std::sqrt(v / c2) + config.eps);
    params[i] = static_cast<float>(params[i] - update);
  }
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("Adam::step: parameter/gradient list length mismatch");
  if (states_.empty()) states_.resize(params.size());
  if (states_.size() != params.size()) throw ShapeError("Adam::step: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_step(params[i]->data(), grads[i]->data(), states_[i], lr, config_);
  }
}

bool PlateauSchedule::update(double val_loss) {
  if (best == std::numeric_limits<double>::infinity()) {
    best = val_loss;
    return false;
  }
  if (val_loss < best - threshold) {
    best = val_loss;
    bad_epochs = 0;
    return false;
  }
  if (++bad_epochs >= patience) {
    lr *= factor;
    bad_epochs = 0;
    return true;
  }
  return false;
}

}  // namespace dvs::train
