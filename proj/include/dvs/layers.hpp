#pragma once

#include <cstdint>
#include <vector>

#include "dvs/tensor.hpp"

// Forward and backward kernels for the fixed layer set. All convolutions are
// stride 1 with zero "same" padding; kernels must have odd extents.
namespace dvs::nn {

enum class PoolMode : std::uint8_t { max = 0, avg = 1 };

// --- depthwise / pointwise / depthwise-separable ---------------------------

// in: C x T x S, kernels: C x kt x ks, bias: C.
template <class T>
BasicTensor<T> depthwise_forward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                                 const BasicTensor<T>& bias);

// in: C_in x T x S, weights: C_in x C_out (row-major), bias: C_out.
template <class T>
BasicTensor<T> pointwise_forward(const BasicTensor<T>& in, const BasicTensor<T>& weights,
                                 const BasicTensor<T>& bias);

// Depthwise stage followed by pointwise mixing; both biases applied. When
// `depthwise_out` is non-null it receives the intermediate map.
template <class T>
BasicTensor<T> ds_conv_forward(const BasicTensor<T>& in, const BasicTensor<T>& dw_kernels,
                               const BasicTensor<T>& dw_bias, const BasicTensor<T>& pw_weights,
                               const BasicTensor<T>& pw_bias,
                               BasicTensor<T>* depthwise_out = nullptr);

// Variants writing into a caller-owned tensor (resized, allocation reused);
// `out`/`mid` must not alias the input.
template <class T>
void depthwise_forward_into(const BasicTensor<T>& in, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                            BasicTensor<T>& out);
template <class T>
void pointwise_forward_into(const BasicTensor<T>& in, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                            BasicTensor<T>& out);
template <class T>
void ds_conv_forward_into(const BasicTensor<T>& in, const BasicTensor<T>& dw_kernels, const BasicTensor<T>& dw_bias,
                          const BasicTensor<T>& pw_weights, const BasicTensor<T>& pw_bias, BasicTensor<T>& mid,
                          BasicTensor<T>& out);

// Gradient kernels accumulate into d_kernels / d_bias / d_weights and
// overwrite d_in (which is resized as needed).
template <class T>
void depthwise_backward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                        const BasicTensor<T>& d_out, BasicTensor<T>& d_kernels,
                        BasicTensor<T>& d_bias, BasicTensor<T>* d_in);

template <class T>
void pointwise_backward(const BasicTensor<T>& in, const BasicTensor<T>& weights,
                        const BasicTensor<T>& d_out, BasicTensor<T>& d_weights,
                        BasicTensor<T>& d_bias, BasicTensor<T>* d_in);

// --- standard convolution ----------------------------------------------------

// in: C_in x T x S, kernels: C_out x C_in x kt x ks, bias: C_out.
template <class T>
BasicTensor<T> standard_conv_forward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                                     const BasicTensor<T>& bias);

template <class T>
void standard_conv_backward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                            const BasicTensor<T>& d_out, BasicTensor<T>& d_kernels,
                            BasicTensor<T>& d_bias, BasicTensor<T>* d_in);

// --- pooling -------------------------------------------------------------------

// Non-overlapping pooling, stride = kernel. For max pooling `argmax`
// receives the flat input index chosen for each output (first max wins).
template <class T>
BasicTensor<T> pool_forward(const BasicTensor<T>& in, PoolMode mode, int kernel_t, int kernel_s,
                            std::vector<std::uint32_t>* argmax = nullptr);

template <class T>
void pool_forward_into(const BasicTensor<T>& in, PoolMode mode, int kernel_t, int kernel_s, BasicTensor<T>& out,
                       std::vector<std::uint32_t>* argmax = nullptr);

template <class T>
BasicTensor<T> pool_backward(const Shape& in_shape, PoolMode mode, int kernel_t, int kernel_s,
                             const BasicTensor<T>& d_out,
                             const std::vector<std::uint32_t>* argmax);

template <class T>
void pool_backward_into(const Shape& in_shape, PoolMode mode, int kernel_t, int kernel_s,
                        const BasicTensor<T>& d_out, const std::vector<std::uint32_t>* argmax,
                        BasicTensor<T>& d_in);

// --- pointwise nonlinearity ------------------------------------------------------

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& in);

// Gradient through ReLU given the forward output.
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& out, const BasicTensor<T>& d_out);

template <class T>
void relu_forward_into(const BasicTensor<T>& in, BasicTensor<T>& out);
template <class T>
void relu_backward_into(const BasicTensor<T>& out, const BasicTensor<T>& d_out, BasicTensor<T>& d_in);

// --- dense head ------------------------------------------------------------------

// x: any shape with D elements, weights: D x K, bias: K. Returns K logits.
template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                             const BasicTensor<T>& bias);

template <class T>
void dense_forward_into(const BasicTensor<T>& x, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                        BasicTensor<T>& out);

template <class T>
void dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                    const BasicTensor<T>& d_logits, BasicTensor<T>& d_weights,
                    BasicTensor<T>& d_bias, BasicTensor<T>* d_x);

// --- classification loss ---------------------------------------------------------

template <class T>
struct SoftmaxCE {
  T loss{};
  std::vector<T> probs;
};

// Max-subtracted softmax followed by -log p[label].
template <class T>
SoftmaxCE<T> softmax_ce(std::span<const T> logits, int label);

}  // namespace dvs::nn
