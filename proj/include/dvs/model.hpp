#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dvs/layers.hpp"
#include "dvs/tensor.hpp"

namespace dvs::nn {

enum class LayerKind : std::uint8_t {
  ds_conv = 0,
  standard_conv = 1,
  max_pool = 2,
  avg_pool = 3,
  relu = 4,
  flatten = 5,
  dense = 6,
};

std::string to_string(LayerKind kind);

enum class Padding : std::uint8_t { same = 0 };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int kernel_t = 1;
  int kernel_s = 1;
  int stride = 1;  // convs: 1; pools: equal to the kernel
  int c_in = 0;
  int c_out = 0;
  Padding padding = Padding::same;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Parameter tensors per layer, in checkpoint order:
//   ds_conv:       depthwise kernels C_in x kt x ks, depthwise bias C_in,
//                  pointwise weights C_in x C_out, pointwise bias C_out
//   standard_conv: kernels C_out x C_in x kt x ks, bias C_out
//   dense:         weights D x K, bias K
template <class T>
struct BasicModel {
  Shape input{1, 256, 11};
  int depth = 3;
  int classes = 3;
  std::size_t hint_layer = 0;  // layer whose output is the distillation hint
  std::vector<LayerSpec> layers;
  std::vector<std::vector<BasicTensor<T>>> params;

  template <class U>
  BasicModel<U> cast() const {
    BasicModel<U> out;
    out.input = input;
    out.depth = depth;
    out.classes = classes;
    out.hint_layer = hint_layer;
    out.layers = layers;
    out.params.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (const auto& p : params[i]) out.params[i].push_back(p.template cast<U>());
    }
    return out;
  }

  friend bool operator==(const BasicModel& a, const BasicModel& b) {
    return a.input == b.input && a.depth == b.depth && a.classes == b.classes &&
           a.hint_layer == b.hint_layer && a.layers == b.layers && a.params == b.params;
  }
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

// Output shape of every layer; validates that the chain is consistent.
std::vector<Shape> infer_shapes(const Shape& input, const std::vector<LayerSpec>& layers);

// Expected parameter tensor shapes for one layer given its input shape.
std::vector<Shape> param_shapes(const LayerSpec& layer, const Shape& in_shape);

// Builds the depthwise-separable classifier for depth 1..5. Block i has
// min(8 * 2^(i-1), 32) channels and a 3x3 kernel; blocks before the last are
// followed by a 2x1 max pool (skipped once time would drop below T/16), the
// last by an average pool down to (T/16) x 1.
Model model_build(int depth, int classes, std::uint64_t seed, Shape input = {1, 256, 11});

struct LayerCost {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct ModelStats {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::vector<LayerCost> per_layer;
  std::uint64_t flops() const { return 2 * macs; }
};

template <class T>
ModelStats model_stats(const BasicModel<T>& model);

template <class T>
struct ForwardResult {
  BasicTensor<T> logits;
  std::optional<BasicTensor<T>> hint;
};

template <class T>
ForwardResult<T> model_forward(const BasicModel<T>& model, const BasicTensor<T>& sample,
                               bool capture_hint = false);

// Everything the backward pass needs from one forward pass.
template <class T>
struct ForwardCache {
  std::vector<BasicTensor<T>> acts;                 // acts[0] = input, acts[i+1] = output of layer i
  std::vector<BasicTensor<T>> depthwise;            // ds_conv intermediate per layer (else empty)
  std::vector<std::vector<std::uint32_t>> argmax;   // max-pool routing per layer

  const BasicTensor<T>& logits() const { return acts.back(); }
  const BasicTensor<T>& output_of(std::size_t layer) const { return acts[layer + 1]; }
};

template <class T>
ForwardCache<T> forward_cached(const BasicModel<T>& model, const BasicTensor<T>& sample);

// Same, reusing the tensors already held by `cache`.
template <class T>
void forward_cached_into(const BasicModel<T>& model, const BasicTensor<T>& sample, ForwardCache<T>& cache);

// One gradient tensor per parameter tensor.
template <class T>
using LayerGrads = std::vector<std::vector<BasicTensor<T>>>;

template <class T>
LayerGrads<T> zero_grads(const BasicModel<T>& model);

// Backpropagates d_logits through the chain, adding `d_hint` to the gradient
// at the hint layer's output when given. Accumulates into `grads`.
template <class T>
void backward_chain(const BasicModel<T>& model, const ForwardCache<T>& cache,
                    const BasicTensor<T>& d_logits, const BasicTensor<T>* d_hint,
                    LayerGrads<T>& grads);

}  // namespace dvs::nn
