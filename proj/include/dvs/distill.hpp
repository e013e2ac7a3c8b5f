#pragma once

#include <cstdint>
#include <span>

#include "dvs/model.hpp"
#include "dvs/tensor.hpp"

namespace dvs::train {

// 1x1 map from hint channels to spectral-target channels. Trained jointly
// with the classifier and discarded at inference.
template <class T>
struct Regressor {
  BasicTensor<T> weight;  // C_hint x C_target
  BasicTensor<T> bias;    // C_target

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }

  template <class U>
  Regressor<U> cast() const {
    return {weight.template cast<U>(), bias.template cast<U>()};
  }
  friend bool operator==(const Regressor&, const Regressor&) = default;
};

Regressor<float> make_regressor(std::size_t hint_channels, std::size_t target_channels, std::uint64_t seed);

template <class T>
struct DistillTerms {
  T loss{};
  T spectral{};  // mean squared error between regressed hint and target
  T ce{};
};

// loss = alpha * MSE(regressor(hint), target) + (1 - alpha) * CE(label, logits).
template <class T>
DistillTerms<T> distill_loss(const BasicTensor<T>& hint, const Regressor<T>& regressor,
                             const BasicTensor<T>& target, std::span<const T> logits, int label,
                             double alpha);

template <class T>
struct DistillGrads {
  BasicTensor<T> d_hint;  // empty when alpha == 0
  BasicTensor<T> d_logits;
  Regressor<T> d_regressor;
};

// distill_loss plus its gradient w.r.t. hint, logits and regressor.
// Regressor gradients accumulate into `grads.d_regressor` (pre-sized).
template <class T>
DistillTerms<T> distill_loss_grad(const BasicTensor<T>& hint, const Regressor<T>& regressor,
                                  const BasicTensor<T>& target, std::span<const T> logits, int label,
                                  double alpha, DistillGrads<T>& grads);

template <class T>
struct BatchItem {
  const BasicTensor<T>* input = nullptr;
  int label = 0;
  const BasicTensor<T>* target = nullptr;  // required when alpha > 0
};

template <class T>
struct Objective {
  double alpha = 0.0;
  const Regressor<T>* regressor = nullptr;  // required when alpha > 0
};

template <class T>
struct Gradients {
  nn::LayerGrads<T> layers;
  Regressor<T> regressor;  // shaped like the objective's regressor, or empty
};

template <class T>
struct BackwardResult {
  Gradients<T> grads;
  DistillTerms<T> terms;  // batch means
};

// Gradients of the full distillation objective, averaged over the batch.
template <class T>
BackwardResult<T> model_backward(const nn::BasicModel<T>& model, std::span<const BatchItem<T>> batch,
                                 const Objective<T>& objective);

}  // namespace dvs::train
