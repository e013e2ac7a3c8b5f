#include "dvs/distill.hpp"

#include <cmath>

#include "dvs/layers.hpp"
#include "dvs/random.hpp"

namespace dvs::train {

Regressor<float> make_regressor(std::size_t hint_channels, std::size_t target_channels, std::uint64_t seed) {
  Regressor<float> r{Tensor(Shape{hint_channels, target_channels}), Tensor(Shape{target_channels})};
  Rng rng(seed);
  const double bound = std::sqrt(3.0 / static_cast<double>(hint_channels));
  for (float& v : r.weight.storage()) v = static_cast<float>(rng.uniform(-bound, bound));
  return r;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("distill_loss: alpha " + std::to_string(alpha) + " outside [0, 1]");
}

template <class T>
BasicTensor<T> regress(const BasicTensor<T>& hint, const Regressor<T>& regressor, const BasicTensor<T>& target) {
  BasicTensor<T> pred = nn::pointwise_forward(hint, regressor.weight, regressor.bias);
  require_shape(target.shape(), pred.shape(), "distill_loss target");
  return pred;
}

}  // namespace

template <class T>
DistillTerms<T> distill_loss(const BasicTensor<T>& hint, const Regressor<T>& regressor,
                             const BasicTensor<T>& target, std::span<const T> logits, int label, double alpha) {
  check_alpha(alpha);
  DistillTerms<T> t;
  t.ce = nn::softmax_ce(logits, label).loss;
  if (alpha == 0.0 && regressor.weight.empty()) {
    t.loss = t.ce;
    return t;
  }
  const BasicTensor<T> pred = regress(hint, regressor, target);
  T sum{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    sum += d * d;
  }
  t.spectral = sum / static_cast<T>(pred.size());
  const T a = static_cast<T>(alpha);
  if (alpha == 0.0) {
    t.loss = t.ce;
  } else if (alpha == 1.0) {
    t.loss = t.spectral;
  } else {
    t.loss = a * t.spectral + (T{1} - a) * t.ce;
  }
  return t;
}

template <class T>
DistillTerms<T> distill_loss_grad(const BasicTensor<T>& hint, const Regressor<T>& regressor,
                                  const BasicTensor<T>& target, std::span<const T> logits, int label,
                                  double alpha, DistillGrads<T>& grads) {
  check_alpha(alpha);
  const T a = static_cast<T>(alpha);
  DistillTerms<T> t;
  const auto ce = nn::softmax_ce(logits, label);
  t.ce = ce.loss;
  grads.d_logits = BasicTensor<T>(Shape{logits.size()});
  if (alpha < 1.0) {
    const T w = alpha == 0.0 ? T{1} : T{1} - a;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      const T onehot = static_cast<int>(k) == label ? T{1} : T{};
      grads.d_logits[k] = w * (ce.probs[k] - onehot);
    }
  }
  if (alpha == 0.0) {
    t.loss = t.ce;
    grads.d_hint = BasicTensor<T>();
    return t;
  }

  const BasicTensor<T> pred = regress(hint, regressor, target);
  const T n = static_cast<T>(pred.size());
  BasicTensor<T> d_pred(pred.shape());
  T sum{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    sum += d * d;
    d_pred[i] = a * T{2} * d / n;
  }
  t.spectral = sum / n;
  t.loss = alpha == 1.0 ? t.spectral : a * t.spectral + (T{1} - a) * t.ce;
  nn::pointwise_backward(hint, regressor.weight, d_pred, grads.d_regressor.weight, grads.d_regressor.bias,
                         &grads.d_hint);
  return t;
}

template <class T>
BackwardResult<T> model_backward(const nn::BasicModel<T>& model, std::span<const BatchItem<T>> batch,
                                 const Objective<T>& objective) {
  if (batch.empty()) throw ValueError("model_backward: empty batch");
  check_alpha(objective.alpha);
  const bool spectral = objective.alpha > 0.0;
  if (spectral && !objective.regressor) throw ValueError("model_backward: alpha > 0 requires a regressor");

  BackwardResult<T> r;
  r.grads.layers = nn::zero_grads(model);
  DistillGrads<T> dg;
  if (objective.regressor) {
    r.grads.regressor = {BasicTensor<T>(objective.regressor->weight.shape()),
                         BasicTensor<T>(objective.regressor->bias.shape())};
    dg.d_regressor = r.grads.regressor;
  }

  for (const BatchItem<T>& item : batch) {
    if (!item.input) throw ValueError("model_backward: batch item without input");
    if (spectral && !item.target) throw ValueError("model_backward: alpha > 0 requires spectral targets");
    thread_local nn::ForwardCache<T> cache;
    nn::forward_cached_into(model, *item.input, cache);
    const BasicTensor<T>& logits = cache.logits();
    DistillTerms<T> terms;
    if (spectral) {
      terms = distill_loss_grad(cache.output_of(model.hint_layer), *objective.regressor, *item.target,
                                logits.data(), item.label, objective.alpha, dg);
    } else {
      const BasicTensor<T> none;
      const Regressor<T> no_regressor;
      terms = distill_loss_grad(none, no_regressor, none, logits.data(), item.label, 0.0, dg);
    }
    nn::backward_chain(model, cache, dg.d_logits, spectral ? &dg.d_hint : nullptr, r.grads.layers);
    r.terms.loss += terms.loss;
    r.terms.spectral += terms.spectral;
    r.terms.ce += terms.ce;
  }

  const T inv = T{1} / static_cast<T>(batch.size());
  for (auto& layer : r.grads.layers) {
    for (auto& g : layer) {
      for (T& v : g.storage()) v *= inv;
    }
  }
  if (objective.regressor) {
    r.grads.regressor = std::move(dg.d_regressor);
    for (T& v : r.grads.regressor.weight.storage()) v *= inv;
    for (T& v : r.grads.regressor.bias.storage()) v *= inv;
  }
  r.terms.loss *= inv;
  r.terms.spectral *= inv;
  r.terms.ce *= inv;
  return r;
}

#define DVS_INSTANTIATE_DISTILL(T)                                                                   \
  template DistillTerms<T> distill_loss(const BasicTensor<T>&, const Regressor<T>&,                  \
                                        const BasicTensor<T>&, std::span<const T>, int, double);      \
  template DistillTerms<T> distill_loss_grad(const BasicTensor<T>&, const Regressor<T>&,             \
                                             const BasicTensor<T>&, std::span<const T>, int, double, \
                                             DistillGrads<T>&);                                      \
  template BackwardResult<T> model_backward(const nn::BasicModel<T>&, std::span<const BatchItem<T>>, \
                                            const Objective<T>&);

DVS_INSTANTIATE_DISTILL(float)
DVS_INSTANTIATE_DISTILL(double)

#undef DVS_INSTANTIATE_DISTILL

}  // namespace dvs::train
