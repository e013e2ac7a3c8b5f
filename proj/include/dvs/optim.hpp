#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dvs/tensor.hpp"

namespace dvs::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, double lr,
               const AdamConfig& config = {});

// Adam over a fixed list of tensors; tensor i's state is states()[i].
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, double lr);

  const std::vector<AdamState>& states() const { return states_; }

 private:
  AdamConfig config_;
  std::vector<AdamState> states_;
};

// Halves the learning rate once validation loss has failed to improve by more
// than `threshold` for `patience` consecutive epochs. The first observation
// only sets the baseline.
struct PlateauSchedule {
  double lr = 0.01;
  int patience = 5;
  double factor = 0.5;
  double threshold = 1e-6;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  // Returns true when the rate was reduced by this call.
  bool update(double val_loss);
};

}  // namespace dvs::train
