#include "dvs/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace dvs::nn {
namespace {

void require_rank3(const Shape& s, const char* what) {
  if (s.size() != 3) throw ShapeError(std::string(what) + ": expected rank-3 map, got " + shape_str(s));
}

void require_odd(std::size_t kt, std::size_t ks, const char* what) {
  if (kt % 2 == 0 || ks % 2 == 0) {
    throw ShapeError(std::string(what) + ": kernel extents must be odd, got " + std::to_string(kt) +
                     "x" + std::to_string(ks));
  }
}

// Zero-padded copy of one channel plane; rows are padded_w wide.
template <class T>
void pad_plane(const T* src, std::size_t h, std::size_t w, std::size_t ph, std::size_t pw,
               std::vector<T>& dst) {
  const std::size_t wp = w + 2 * pw;
  dst.assign((h + 2 * ph) * wp, T{});
  for (std::size_t t = 0; t < h; ++t) {
    std::copy(src + t * w, src + (t + 1) * w, dst.data() + (t + ph) * wp + pw);
  }
}

// Fixed-width SIMD block via the compiler's vector extension; lanes are
// independent, so results do not depend on the target ISA.
template <class T>
struct Vec {
  typedef T type __attribute__((vector_size(32)));
  static constexpr std::size_t lanes = 32 / sizeof(T);
  static type load(const T* p) {
    type v;
    std::memcpy(&v, p, sizeof v);
    return v;
  }
  static void store(T* p, type v) { std::memcpy(p, &v, sizeof v); }
  // x - 0 is exact for every x, including -0.
  static type splat(T x) { return x - type{}; }
};

inline constexpr std::size_t kVecs = 4;  // vectors per register block

// Correlates one padded plane with one kernel, accumulating in "wide"
// coordinates (output row stride = padded width) so every tap is a
// contiguous axpy. A block of outputs stays in registers across taps; per
// element the taps are still added in (dt, ds) order.
template <class T>
void correlate_wide(const std::vector<T>& padded, std::size_t h, std::size_t w, const T* kernel,
                    std::size_t kt, std::size_t ks, T* wide) {
  using V = Vec<T>;
  constexpr std::size_t B = V::lanes * kVecs;
  const std::size_t wp = w + ks - 1;
  const std::size_t n = h * wp - (ks - 1);
  const std::size_t taps = kt * ks;
  std::size_t offs[64];
  const bool blocked = taps <= 64;
  if (blocked) {
    for (std::size_t k = 0; k < taps; ++k) offs[k] = (k / ks) * wp + (k % ks);
  }
  std::size_t i0 = 0;
  for (; blocked && i0 + B <= n; i0 += B) {
    typename V::type acc[kVecs];
    for (std::size_t v = 0; v < kVecs; ++v) acc[v] = V::load(wide + i0 + v * V::lanes);
    for (std::size_t k = 0; k < taps; ++k) {
      const T* src = padded.data() + offs[k] + i0;
      for (std::size_t v = 0; v < kVecs; ++v) acc[v] += kernel[k] * V::load(src + v * V::lanes);
    }
    for (std::size_t v = 0; v < kVecs; ++v) V::store(wide + i0 + v * V::lanes, acc[v]);
  }
  for (std::size_t k = 0; k < taps; ++k) {
    const T kvs = kernel[k];
    const T* src = padded.data() + (k / ks) * wp + (k % ks);
    for (std::size_t i = i0; i < n; ++i) wide[i] += kvs * src[i];
  }
}

// dst[o] = bias[o] + sum_c w[c * w_stride_c + o * w_stride_o] * src[c] over
// planes of length `plane`; channels are added in index order.
template <class T>
void mix_channels(const T* src, std::size_t cin, std::size_t cout, std::size_t plane, const T* w,
                  std::size_t w_stride_c, std::size_t w_stride_o, const T* bias, T* dst) {
  using V = Vec<T>;
  constexpr std::size_t B = V::lanes * kVecs;
  std::size_t p0 = 0;
  for (; p0 + B <= plane; p0 += B) {
    for (std::size_t o = 0; o < cout; ++o) {
      typename V::type acc[kVecs];
      const typename V::type b = V::splat(bias ? bias[o] : T{});
      for (std::size_t v = 0; v < kVecs; ++v) acc[v] = b;
      for (std::size_t c = 0; c < cin; ++c) {
        const T wv = w[c * w_stride_c + o * w_stride_o];
        const T* s = src + c * plane + p0;
        for (std::size_t v = 0; v < kVecs; ++v) acc[v] += wv * V::load(s + v * V::lanes);
      }
      T* d = dst + o * plane + p0;
      for (std::size_t v = 0; v < kVecs; ++v) V::store(d + v * V::lanes, acc[v]);
    }
  }
  for (std::size_t o = 0; o < cout; ++o) {
    T* d = dst + o * plane;
    const T b = bias ? bias[o] : T{};
    for (std::size_t p = p0; p < plane; ++p) d[p] = b;
    for (std::size_t c = 0; c < cin; ++c) {
      const T wv = w[c * w_stride_c + o * w_stride_o];
      const T* s = src + c * plane;
      for (std::size_t p = p0; p < plane; ++p) d[p] += wv * s[p];
    }
  }
}

// Eight independent partial sums in a fixed order: vectorizes without
// -ffast-math and stays bit-reproducible.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t L = 8;
  T acc[L] = {};
  std::size_t i = 0;
  for (; i + L <= n; i += L) {
    for (std::size_t j = 0; j < L; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail{};
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

template <class T>
T sum(const T* a, std::size_t n) {
  constexpr std::size_t L = 8;
  T acc[L] = {};
  std::size_t i = 0;
  for (; i + L <= n; i += L) {
    for (std::size_t j = 0; j < L; ++j) acc[j] += a[i + j];
  }
  T tail{};
  for (; i < n; ++i) tail += a[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

}  // namespace

template <class T>
void depthwise_forward_into(const BasicTensor<T>& in, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                            BasicTensor<T>& out) {
  require_rank3(in.shape(), "depthwise_forward input");
  require_rank3(kernels.shape(), "depthwise_forward kernels");
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t kt = kernels.dim(1), ks = kernels.dim(2);
  if (kernels.dim(0) != c) {
    throw ShapeError("depthwise_forward: " + std::to_string(kernels.dim(0)) + " kernels for " +
                     std::to_string(c) + " input channels");
  }
  require_shape(bias.shape(), Shape{c}, "depthwise_forward bias");
  require_odd(kt, ks, "depthwise_forward");

  out.resize(Shape{c, h, w});
  const std::size_t wp = w + ks - 1;
  thread_local std::vector<T> padded;
  thread_local std::vector<T> wide;
  wide.resize(h * wp);
  for (std::size_t ch = 0; ch < c; ++ch) {
    pad_plane(in.raw() + ch * h * w, h, w, kt / 2, ks / 2, padded);
    std::fill(wide.begin(), wide.end(), bias[ch]);
    correlate_wide(padded, h, w, kernels.raw() + ch * kt * ks, kt, ks, wide.data());
    T* dst = out.raw() + ch * h * w;
    for (std::size_t t = 0; t < h; ++t) std::copy_n(wide.data() + t * wp, w, dst + t * w);
  }
}

template <class T>
BasicTensor<T> depthwise_forward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                                 const BasicTensor<T>& bias) {
  BasicTensor<T> out;
  depthwise_forward_into(in, kernels, bias, out);
  return out;
}

template <class T>
void pointwise_forward_into(const BasicTensor<T>& in, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                            BasicTensor<T>& out) {
  require_rank3(in.shape(), "pointwise_forward input");
  if (weights.rank() != 2 || weights.dim(0) != in.dim(0)) {
    throw ShapeError("pointwise_forward: weights " + shape_str(weights.shape()) +
                     " incompatible with input " + shape_str(in.shape()));
  }
  const std::size_t cin = weights.dim(0), cout = weights.dim(1);
  require_shape(bias.shape(), Shape{cout}, "pointwise_forward bias");
  const std::size_t plane = in.dim(1) * in.dim(2);

  out.resize(Shape{cout, in.dim(1), in.dim(2)});
  mix_channels(in.raw(), cin, cout, plane, weights.raw(), cout, 1, bias.raw(), out.raw());
}

template <class T>
BasicTensor<T> pointwise_forward(const BasicTensor<T>& in, const BasicTensor<T>& weights,
                                 const BasicTensor<T>& bias) {
  BasicTensor<T> out;
  pointwise_forward_into(in, weights, bias, out);
  return out;
}

template <class T>
BasicTensor<T> ds_conv_forward(const BasicTensor<T>& in, const BasicTensor<T>& dw_kernels,
                               const BasicTensor<T>& dw_bias, const BasicTensor<T>& pw_weights,
                               const BasicTensor<T>& pw_bias, BasicTensor<T>* depthwise_out) {
  BasicTensor<T> mid = depthwise_forward(in, dw_kernels, dw_bias);
  BasicTensor<T> out = pointwise_forward(mid, pw_weights, pw_bias);
  if (depthwise_out) *depthwise_out = std::move(mid);
  return out;
}

template <class T>
void ds_conv_forward_into(const BasicTensor<T>& in, const BasicTensor<T>& dw_kernels, const BasicTensor<T>& dw_bias,
                          const BasicTensor<T>& pw_weights, const BasicTensor<T>& pw_bias, BasicTensor<T>& mid,
                          BasicTensor<T>& out) {
  depthwise_forward_into(in, dw_kernels, dw_bias, mid);
  pointwise_forward_into(mid, pw_weights, pw_bias, out);
}

template <class T>
void depthwise_backward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                        const BasicTensor<T>& d_out, BasicTensor<T>& d_kernels,
                        BasicTensor<T>& d_bias, BasicTensor<T>* d_in) {
  require_shape(d_out.shape(), in.shape(), "depthwise_backward d_out");
  require_shape(d_kernels.shape(), kernels.shape(), "depthwise_backward d_kernels");
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t kt = kernels.dim(1), ks = kernels.dim(2);
  const std::size_t ph = kt / 2, pw = ks / 2;
  const std::size_t wp = w + ks - 1;
  const std::size_t n = h * wp - (ks - 1);

  if (d_in) d_in->resize(in.shape());
  thread_local std::vector<T> padded;
  thread_local std::vector<T> wide;
  thread_local std::vector<T> d_padded;
  wide.resize(h * wp);
  for (std::size_t ch = 0; ch < c; ++ch) {
    pad_plane(in.raw() + ch * h * w, h, w, ph, pw, padded);
    std::fill(wide.begin(), wide.end(), T{});
    const T* g = d_out.raw() + ch * h * w;
    T bias_sum{};
    for (std::size_t t = 0; t < h; ++t) {
      for (std::size_t s = 0; s < w; ++s) {
        wide[t * wp + s] = g[t * w + s];
        bias_sum += g[t * w + s];
      }
    }
    d_bias[ch] += bias_sum;
    const T* k = kernels.raw() + ch * kt * ks;
    T* dk = d_kernels.raw() + ch * kt * ks;
    if (d_in) d_padded.assign(padded.size(), T{});
    for (std::size_t dt = 0; dt < kt; ++dt) {
      for (std::size_t ds = 0; ds < ks; ++ds) {
        const std::size_t off = dt * wp + ds;
        dk[dt * ks + ds] += dot(wide.data(), padded.data() + off, n);
        if (d_in) {
          const T kv = k[dt * ks + ds];
          T* dst = d_padded.data() + off;
          for (std::size_t i = 0; i < n; ++i) dst[i] += kv * wide[i];
        }
      }
    }
    if (d_in) {
      T* dst = d_in->raw() + ch * h * w;
      for (std::size_t t = 0; t < h; ++t) {
        std::copy_n(d_padded.data() + (t + ph) * wp + pw, w, dst + t * w);
      }
    }
  }
}

template <class T>
void pointwise_backward(const BasicTensor<T>& in, const BasicTensor<T>& weights,
                        const BasicTensor<T>& d_out, BasicTensor<T>& d_weights,
                        BasicTensor<T>& d_bias, BasicTensor<T>* d_in) {
  const std::size_t cin = weights.dim(0), cout = weights.dim(1);
  const std::size_t plane = in.dim(1) * in.dim(2);
  require_shape(d_out.shape(), Shape{cout, in.dim(1), in.dim(2)}, "pointwise_backward d_out");
  for (std::size_t o = 0; o < cout; ++o) {
    const T* g = d_out.raw() + o * plane;
    d_bias[o] += sum(g, plane);
    for (std::size_t c = 0; c < cin; ++c) {
      d_weights[c * cout + o] += dot(in.raw() + c * plane, g, plane);
    }
  }
  if (d_in) {
    d_in->resize(in.shape());
    mix_channels(d_out.raw(), cout, cin, plane, weights.raw(), 1, cout, static_cast<const T*>(nullptr), d_in->raw());
  }
}

template <class T>
BasicTensor<T> standard_conv_forward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                                     const BasicTensor<T>& bias) {
  require_rank3(in.shape(), "standard_conv_forward input");
  if (kernels.rank() != 4 || kernels.dim(1) != in.dim(0)) {
    throw ShapeError("standard_conv_forward: kernels " + shape_str(kernels.shape()) +
                     " incompatible with input " + shape_str(in.shape()));
  }
  const std::size_t cout = kernels.dim(0), cin = kernels.dim(1);
  const std::size_t kt = kernels.dim(2), ks = kernels.dim(3);
  require_shape(bias.shape(), Shape{cout}, "standard_conv_forward bias");
  require_odd(kt, ks, "standard_conv_forward");
  const std::size_t h = in.dim(1), w = in.dim(2), wp = w + ks - 1;

  std::vector<std::vector<T>> padded(cin);
  for (std::size_t c = 0; c < cin; ++c) pad_plane(in.raw() + c * h * w, h, w, kt / 2, ks / 2, padded[c]);

  BasicTensor<T> out(Shape{cout, h, w});
  std::vector<T> wide(h * wp);
  for (std::size_t o = 0; o < cout; ++o) {
    std::fill(wide.begin(), wide.end(), bias[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      correlate_wide(padded[c], h, w, kernels.raw() + (o * cin + c) * kt * ks, kt, ks, wide.data());
    }
    T* dst = out.raw() + o * h * w;
    for (std::size_t t = 0; t < h; ++t) std::copy_n(wide.data() + t * wp, w, dst + t * w);
  }
  return out;
}

template <class T>
void standard_conv_backward(const BasicTensor<T>& in, const BasicTensor<T>& kernels,
                            const BasicTensor<T>& d_out, BasicTensor<T>& d_kernels,
                            BasicTensor<T>& d_bias, BasicTensor<T>* d_in) {
  const std::size_t cout = kernels.dim(0), cin = kernels.dim(1);
  const std::size_t kt = kernels.dim(2), ks = kernels.dim(3);
  const std::size_t h = in.dim(1), w = in.dim(2), wp = w + ks - 1;
  const std::size_t ph = kt / 2, pw = ks / 2;
  const std::size_t n = h * wp - (ks - 1);
  require_shape(d_out.shape(), Shape{cout, h, w}, "standard_conv_backward d_out");

  std::vector<std::vector<T>> padded(cin);
  std::vector<std::vector<T>> d_padded(cin);
  for (std::size_t c = 0; c < cin; ++c) {
    pad_plane(in.raw() + c * h * w, h, w, ph, pw, padded[c]);
    d_padded[c].assign(padded[c].size(), T{});
  }
  std::vector<T> wide(h * wp);
  for (std::size_t o = 0; o < cout; ++o) {
    std::fill(wide.begin(), wide.end(), T{});
    const T* g = d_out.raw() + o * h * w;
    T sum{};
    for (std::size_t t = 0; t < h; ++t) {
      for (std::size_t s = 0; s < w; ++s) {
        wide[t * wp + s] = g[t * w + s];
        sum += g[t * w + s];
      }
    }
    d_bias[o] += sum;
    for (std::size_t c = 0; c < cin; ++c) {
      const T* k = kernels.raw() + (o * cin + c) * kt * ks;
      T* dk = d_kernels.raw() + (o * cin + c) * kt * ks;
      for (std::size_t dt = 0; dt < kt; ++dt) {
        for (std::size_t ds = 0; ds < ks; ++ds) {
          const std::size_t off = dt * wp + ds;
          dk[dt * ks + ds] += dot(wide.data(), padded[c].data() + off, n);
          const T kv = k[dt * ks + ds];
          T* dst = d_padded[c].data() + off;
          for (std::size_t i = 0; i < n; ++i) dst[i] += kv * wide[i];
        }
      }
    }
  }
  if (d_in) {
    *d_in = BasicTensor<T>(in.shape());
    for (std::size_t c = 0; c < cin; ++c) {
      T* dst = d_in->raw() + c * h * w;
      for (std::size_t t = 0; t < h; ++t) std::copy_n(d_padded[c].data() + (t + ph) * wp + pw, w, dst + t * w);
    }
  }
}

template <class T>
void pool_forward_into(const BasicTensor<T>& in, PoolMode mode, int kernel_t, int kernel_s, BasicTensor<T>& out,
                       std::vector<std::uint32_t>* argmax) {
  require_rank3(in.shape(), "pool_forward input");
  if (kernel_t <= 0 || kernel_s <= 0) throw ShapeError("pool_forward: kernel extents must be positive");
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t kt = static_cast<std::size_t>(kernel_t), ks = static_cast<std::size_t>(kernel_s);
  if (h % kt != 0 || w % ks != 0) {
    throw ShapeError("pool_forward: kernel " + std::to_string(kt) + "x" + std::to_string(ks) +
                     " does not divide input " + shape_str(in.shape()));
  }
  const std::size_t oh = h / kt, ow = w / ks;
  out.resize(Shape{c, oh, ow});
  if (argmax) argmax->resize(out.size());
  const T inv = T{1} / static_cast<T>(kt * ks);
  // Window elements are always visited in (a, b) order: the first maximum
  // wins and averages sum in a fixed order.
  if (ks == 1 && mode == PoolMode::max) {
    // Time-only pooling: whole rows are contiguous, so scan them directly.
    const std::size_t rows = c * oh;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t first = r * kt * w;
      const T* src = in.raw() + first;
      T* dst = out.raw() + r * w;
      std::copy_n(src, w, dst);
      if (argmax) {
        std::uint32_t* id = argmax->data() + r * w;
        for (std::size_t j = 0; j < w; ++j) id[j] = static_cast<std::uint32_t>(first + j);
        for (std::size_t a = 1; a < kt; ++a) {
          const T* s = src + a * w;
          const auto base = static_cast<std::uint32_t>(first + a * w);
          for (std::size_t j = 0; j < w; ++j) {
            const bool take = s[j] > dst[j];
            dst[j] = take ? s[j] : dst[j];
            id[j] = take ? base + static_cast<std::uint32_t>(j) : id[j];
          }
        }
      } else {
        for (std::size_t a = 1; a < kt; ++a) {
          const T* s = src + a * w;
          for (std::size_t j = 0; j < w; ++j) dst[j] = s[j] > dst[j] ? s[j] : dst[j];
        }
      }
    }
    return;
  }
  if (ks == w && mode == PoolMode::avg) {
    // Full-width windows are contiguous blocks.
    for (std::size_t r = 0; r < c * oh; ++r) out[r] = sum(in.raw() + r * kt * w, kt * w) * inv;
    return;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t o = (ch * oh + i) * ow + j;
        if (mode == PoolMode::max) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t a = 0; a < kt; ++a) {
            for (std::size_t b = 0; b < ks; ++b) {
              const std::size_t k = (ch * h + i * kt + a) * w + j * ks + b;
              if (in[k] > best) {
                best = in[k];
                best_idx = k;
              }
            }
          }
          out[o] = best;
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best_idx);
        } else {
          T sum{};
          for (std::size_t a = 0; a < kt; ++a) {
            const T* src = in.raw() + (ch * h + i * kt + a) * w + j * ks;
            for (std::size_t b = 0; b < ks; ++b) sum += src[b];
          }
          out[o] = sum * inv;
        }
      }
    }
  }
}

template <class T>
BasicTensor<T> pool_forward(const BasicTensor<T>& in, PoolMode mode, int kernel_t, int kernel_s,
                            std::vector<std::uint32_t>* argmax) {
  BasicTensor<T> out;
  pool_forward_into(in, mode, kernel_t, kernel_s, out, argmax);
  return out;
}

template <class T>
void pool_backward_into(const Shape& in_shape, PoolMode mode, int kernel_t, int kernel_s,
                        const BasicTensor<T>& d_out, const std::vector<std::uint32_t>* argmax,
                        BasicTensor<T>& d_in) {
  if (mode == PoolMode::max) {
    if (!argmax || argmax->size() != d_out.size()) throw ShapeError("pool_backward: missing argmax indices");
    d_in.resize(in_shape, T{});
    for (std::size_t o = 0; o < d_out.size(); ++o) d_in[(*argmax)[o]] += d_out[o];
    return;
  }
  d_in.resize(in_shape);
  const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
  const std::size_t kt = static_cast<std::size_t>(kernel_t), ks = static_cast<std::size_t>(kernel_s);
  const std::size_t oh = h / kt, ow = w / ks;
  const T inv = T{1} / static_cast<T>(kt * ks);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const T g = d_out[(ch * oh + i) * ow + j] * inv;
        for (std::size_t a = 0; a < kt; ++a) {
          for (std::size_t b = 0; b < ks; ++b) d_in[(ch * h + i * kt + a) * w + j * ks + b] = g;
        }
      }
    }
  }
}

template <class T>
BasicTensor<T> pool_backward(const Shape& in_shape, PoolMode mode, int kernel_t, int kernel_s,
                             const BasicTensor<T>& d_out, const std::vector<std::uint32_t>* argmax) {
  BasicTensor<T> d_in;
  pool_backward_into(in_shape, mode, kernel_t, kernel_s, d_out, argmax, d_in);
  return d_in;
}

template <class T>
void relu_forward_into(const BasicTensor<T>& in, BasicTensor<T>& out) {
  out.resize(in.shape());
  const T* src = in.raw();
  T* dst = out.raw();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = src[i] > T{} ? src[i] : T{};
}

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& in) {
  BasicTensor<T> out;
  relu_forward_into(in, out);
  return out;
}

template <class T>
void relu_backward_into(const BasicTensor<T>& out, const BasicTensor<T>& d_out, BasicTensor<T>& d_in) {
  d_in.resize(out.shape());
  const T* o = out.raw();
  const T* g = d_out.raw();
  T* dst = d_in.raw();
  for (std::size_t i = 0; i < out.size(); ++i) dst[i] = o[i] > T{} ? g[i] : T{};
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& out, const BasicTensor<T>& d_out) {
  BasicTensor<T> d_in;
  relu_backward_into(out, d_out, d_in);
  return d_in;
}

template <class T>
void dense_forward_into(const BasicTensor<T>& x, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                        BasicTensor<T>& out) {
  if (weights.rank() != 2 || weights.dim(0) != x.size()) {
    throw ShapeError("dense_forward: input of length " + std::to_string(x.size()) +
                     " does not match weights " + shape_str(weights.shape()));
  }
  const std::size_t d = weights.dim(0), k = weights.dim(1);
  require_shape(bias.shape(), Shape{k}, "dense_forward bias");
  out.resize(Shape{k});
  for (std::size_t j = 0; j < k; ++j) out[j] = bias[j];
  for (std::size_t i = 0; i < d; ++i) {
    const T xi = x[i];
    for (std::size_t j = 0; j < k; ++j) out[j] += weights[i * k + j] * xi;
  }
}

template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                             const BasicTensor<T>& bias) {
  BasicTensor<T> out;
  dense_forward_into(x, weights, bias, out);
  return out;
}

template <class T>
void dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights,
                    const BasicTensor<T>& d_logits, BasicTensor<T>& d_weights,
                    BasicTensor<T>& d_bias, BasicTensor<T>* d_x) {
  const std::size_t d = weights.dim(0), k = weights.dim(1);
  for (std::size_t j = 0; j < k; ++j) d_bias[j] += d_logits[j];
  if (d_x) d_x->resize(x.shape());
  for (std::size_t i = 0; i < d; ++i) {
    T acc{};
    for (std::size_t j = 0; j < k; ++j) {
      d_weights[i * k + j] += x[i] * d_logits[j];
      acc += weights[i * k + j] * d_logits[j];
    }
    if (d_x) (*d_x)[i] = acc;
  }
}

template <class T>
SoftmaxCE<T> softmax_ce(std::span<const T> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ValueError("softmax_ce: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(logits.size()) + ")");
  }
  SoftmaxCE<T> r;
  const T peak = *std::max_element(logits.begin(), logits.end());
  r.probs.resize(logits.size());
  T denom{};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probs[i] = std::exp(logits[i] - peak);
    denom += r.probs[i];
  }
  for (T& p : r.probs) p /= denom;
  // log-sum-exp form keeps the loss exact when p[label] underflows.
  r.loss = std::log(denom) - (logits[static_cast<std::size_t>(label)] - peak);
  if (r.loss < T{}) r.loss = T{};
  return r;
}

#define DVS_INSTANTIATE_LAYERS(T)                                                                  \
  template BasicTensor<T> depthwise_forward(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                            const BasicTensor<T>&);                                \
  template BasicTensor<T> pointwise_forward(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                            const BasicTensor<T>&);                                \
  template BasicTensor<T> ds_conv_forward(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                          const BasicTensor<T>&, const BasicTensor<T>&,            \
                                          const BasicTensor<T>&, BasicTensor<T>*);                 \
  template void depthwise_backward(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                   const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,        \
                                   BasicTensor<T>*);                                               \
  template void pointwise_backward(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                   const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,        \
                                   BasicTensor<T>*);                                               \
  template BasicTensor<T> standard_conv_forward(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                                const BasicTensor<T>&);                            \
  template void standard_conv_backward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                       const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,    \
                                       BasicTensor<T>*);                                           \
  template BasicTensor<T> pool_forward(const BasicTensor<T>&, PoolMode, int, int,                  \
                                       std::vector<std::uint32_t>*);                               \
  template BasicTensor<T> pool_backward(const Shape&, PoolMode, int, int, const BasicTensor<T>&,   \
                                        const std::vector<std::uint32_t>*);                        \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                     \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> dense_forward(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                        const BasicTensor<T>&);                                    \
  template void dense_backward(const BasicTensor<T>&, const BasicTensor<T>&,                       \
                               const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,            \
                               BasicTensor<T>*);                                                   \
  template SoftmaxCE<T> softmax_ce(std::span<const T>, int);                                       \
  template void depthwise_forward_into(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                       const BasicTensor<T>&, BasicTensor<T>&);                    \
  template void pointwise_forward_into(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                       const BasicTensor<T>&, BasicTensor<T>&);                    \
  template void ds_conv_forward_into(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                     const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                     const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&);     \
  template void pool_forward_into(const BasicTensor<T>&, PoolMode, int, int, BasicTensor<T>&,      \
                                  std::vector<std::uint32_t>*);                                    \
  template void pool_backward_into(const Shape&, PoolMode, int, int, const BasicTensor<T>&,        \
                                   const std::vector<std::uint32_t>*, BasicTensor<T>&);            \
  template void relu_forward_into(const BasicTensor<T>&, BasicTensor<T>&);                         \
  template void relu_backward_into(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&); \
  template void dense_forward_into(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                   const BasicTensor<T>&, BasicTensor<T>&);

DVS_INSTANTIATE_LAYERS(float)
DVS_INSTANTIATE_LAYERS(double)

#undef DVS_INSTANTIATE_LAYERS

}  // namespace dvs::nn
