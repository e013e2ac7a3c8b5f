#include "dvs/model.hpp"

#include <algorithm>
#include <cmath>

#include "dvs/random.hpp"

namespace dvs::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::ds_conv: return "ds_conv";
    case LayerKind::standard_conv: return "standard_conv";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "unknown";
}

namespace {

std::string layer_ctx(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

}  // namespace

std::vector<Shape> infer_shapes(const Shape& input, const std::vector<LayerSpec>& layers) {
  std::vector<Shape> out;
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string ctx = layer_ctx(i, l);
    switch (l.kind) {
      case LayerKind::ds_conv:
      case LayerKind::standard_conv:
        if (cur.size() != 3 || static_cast<int>(cur[0]) != l.c_in) {
          throw ShapeError(ctx + ": expects " + std::to_string(l.c_in) + " input channels, got " + shape_str(cur));
        }
        if (l.kernel_t % 2 == 0 || l.kernel_s % 2 == 0 || l.kernel_t <= 0 || l.kernel_s <= 0) {
          throw ShapeError(ctx + ": kernel extents must be odd and positive");
        }
        if (l.stride != 1) throw ShapeError(ctx + ": only stride 1 is supported");
        cur = Shape{static_cast<std::size_t>(l.c_out), cur[1], cur[2]};
        break;
      case LayerKind::max_pool:
      case LayerKind::avg_pool:
        if (cur.size() != 3 || l.kernel_t <= 0 || l.kernel_s <= 0 ||
            cur[1] % static_cast<std::size_t>(l.kernel_t) != 0 ||
            cur[2] % static_cast<std::size_t>(l.kernel_s) != 0) {
          throw ShapeError(ctx + ": kernel " + std::to_string(l.kernel_t) + "x" + std::to_string(l.kernel_s) +
                           " does not divide " + shape_str(cur));
        }
        cur = Shape{cur[0], cur[1] / static_cast<std::size_t>(l.kernel_t),
                    cur[2] / static_cast<std::size_t>(l.kernel_s)};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        cur = Shape{shape_size(cur)};
        break;
      case LayerKind::dense:
        if (cur.size() != 1 || static_cast<int>(cur[0]) != l.c_in) {
          throw ShapeError(ctx + ": expects flat input of " + std::to_string(l.c_in) + ", got " + shape_str(cur));
        }
        cur = Shape{static_cast<std::size_t>(l.c_out)};
        break;
    }
    out.push_back(cur);
  }
  return out;
}

std::vector<Shape> param_shapes(const LayerSpec& l, const Shape& in_shape) {
  const auto cin = static_cast<std::size_t>(l.c_in), cout = static_cast<std::size_t>(l.c_out);
  const auto kt = static_cast<std::size_t>(l.kernel_t), ks = static_cast<std::size_t>(l.kernel_s);
  switch (l.kind) {
    case LayerKind::ds_conv: return {{cin, kt, ks}, {cin}, {cin, cout}, {cout}};
    case LayerKind::standard_conv: return {{cout, cin, kt, ks}, {cout}};
    case LayerKind::dense: return {{shape_size(in_shape), cout}, {cout}};
    default: return {};
  }
}

Model model_build(int depth, int classes, std::uint64_t seed, Shape input) {
  if (depth < 1 || depth > 5) throw ValueError("model_build: depth " + std::to_string(depth) + " outside [1, 5]");
  if (classes < 2) throw ValueError("model_build: need at least 2 classes");
  if (input.size() != 3 || input[1] < 16 || input[1] % 16 != 0) {
    throw ShapeError("model_build: input must be C x T x S with T a multiple of 16, got " + shape_str(input));
  }

  Model m;
  m.input = input;
  m.depth = depth;
  m.classes = classes;
  m.hint_layer = 0;

  const std::size_t final_t = input[1] / 16;
  std::size_t t = input[1];
  int channels = static_cast<int>(input[0]);
  for (int i = 1; i <= depth; ++i) {
    const int cout = std::min(8 << (i - 1), 32);
    m.layers.push_back({LayerKind::ds_conv, 3, 3, 1, channels, cout});
    m.layers.push_back({LayerKind::relu});
    channels = cout;
    if (i < depth) {
      if (t / 2 >= final_t) {
        m.layers.push_back({LayerKind::max_pool, 2, 1, 2});
        t /= 2;
      }
    } else {
      const int kt = static_cast<int>(t / final_t);
      const int ks = static_cast<int>(input[2]);
      m.layers.push_back({LayerKind::avg_pool, kt, ks, kt});
    }
  }
  m.layers.push_back({LayerKind::flatten});
  const int flat = channels * static_cast<int>(final_t);
  m.layers.push_back({LayerKind::dense, 1, 1, 1, flat, classes});

  // Fan-in scaled uniform; gain 2 where a ReLU follows (pointwise stage).
  Rng rng(seed);
  const auto shapes = infer_shapes(m.input, m.layers);
  m.params.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Shape& in_shape = i == 0 ? m.input : shapes[i - 1];
    const auto ps = param_shapes(m.layers[i], in_shape);
    for (std::size_t p = 0; p < ps.size(); ++p) {
      Tensor tensor(ps[p]);
      const bool is_bias = ps[p].size() == 1;
      if (!is_bias) {
        double fan_in = 1.0, gain = 1.0;
        const LayerSpec& l = m.layers[i];
        if (l.kind == LayerKind::ds_conv) {
          fan_in = p == 0 ? l.kernel_t * l.kernel_s : l.c_in;
          gain = p == 0 ? 1.0 : 2.0;
        } else if (l.kind == LayerKind::standard_conv) {
          fan_in = static_cast<double>(l.c_in) * l.kernel_t * l.kernel_s;
          gain = 2.0;
        } else {
          fan_in = static_cast<double>(ps[p][0]);
        }
        const double bound = std::sqrt(3.0 * gain / fan_in);
        for (float& v : tensor.storage()) v = static_cast<float>(rng.uniform(-bound, bound));
      }
      m.params[i].push_back(std::move(tensor));
    }
  }
  return m;
}

template <class T>
ModelStats model_stats(const BasicModel<T>& model) {
  ModelStats st;
  const auto shapes = infer_shapes(model.input, model.layers);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const Shape& in = i == 0 ? model.input : shapes[i - 1];
    LayerCost c;
    for (const auto& ps : param_shapes(l, in)) c.params += shape_size(ps);
    const std::uint64_t kk = static_cast<std::uint64_t>(l.kernel_t) * static_cast<std::uint64_t>(l.kernel_s);
    switch (l.kind) {
      case LayerKind::ds_conv: {
        const std::uint64_t plane = in[1] * in[2];
        c.macs = static_cast<std::uint64_t>(l.c_in) * kk * plane +
                 static_cast<std::uint64_t>(l.c_in) * static_cast<std::uint64_t>(l.c_out) * plane;
        break;
      }
      case LayerKind::standard_conv:
        c.macs = static_cast<std::uint64_t>(l.c_out) * static_cast<std::uint64_t>(l.c_in) * kk * in[1] * in[2];
        break;
      case LayerKind::dense:
        c.macs = shape_size(in) * static_cast<std::uint64_t>(l.c_out);
        break;
      default:
        break;
    }
    st.params += c.params;
    st.macs += c.macs;
    st.per_layer.push_back(c);
  }
  return st;
}

template <class T>
void forward_cached_into(const BasicModel<T>& model, const BasicTensor<T>& sample, ForwardCache<T>& cache) {
  require_shape(sample.shape(), model.input, "model_forward sample");
  const std::size_t n = model.layers.size();
  cache.acts.resize(n + 1);
  cache.depthwise.resize(n);
  cache.argmax.resize(n);
  cache.acts[0].resize(sample.shape());
  std::copy(sample.data().begin(), sample.data().end(), cache.acts[0].raw());
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& l = model.layers[i];
    const auto& p = model.params[i];
    const BasicTensor<T>& x = cache.acts[i];
    BasicTensor<T>& y = cache.acts[i + 1];
    switch (l.kind) {
      case LayerKind::ds_conv:
        ds_conv_forward_into(x, p[0], p[1], p[2], p[3], cache.depthwise[i], y);
        break;
      case LayerKind::standard_conv:
        y = standard_conv_forward(x, p[0], p[1]);
        break;
      case LayerKind::max_pool:
        pool_forward_into(x, PoolMode::max, l.kernel_t, l.kernel_s, y, &cache.argmax[i]);
        break;
      case LayerKind::avg_pool:
        pool_forward_into(x, PoolMode::avg, l.kernel_t, l.kernel_s, y);
        break;
      case LayerKind::relu:
        relu_forward_into(x, y);
        break;
      case LayerKind::flatten:
        y.resize(Shape{x.size()});
        std::copy(x.data().begin(), x.data().end(), y.raw());
        break;
      case LayerKind::dense:
        dense_forward_into(x, p[0], p[1], y);
        break;
    }
  }
}

template <class T>
ForwardCache<T> forward_cached(const BasicModel<T>& model, const BasicTensor<T>& sample) {
  ForwardCache<T> cache;
  forward_cached_into(model, sample, cache);
  return cache;
}

template <class T>
ForwardResult<T> model_forward(const BasicModel<T>& model, const BasicTensor<T>& sample, bool capture_hint) {
  require_shape(sample.shape(), model.input, "model_forward sample");
  ForwardResult<T> r;
  // Ping-pong buffers reused across calls on the same thread.
  thread_local BasicTensor<T> buf[2];
  thread_local BasicTensor<T> mid;
  std::size_t cur = 0;
  buf[0].resize(sample.shape());
  std::copy(sample.data().begin(), sample.data().end(), buf[0].raw());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const auto& p = model.params[i];
    const BasicTensor<T>& x = buf[cur];
    BasicTensor<T>& y = buf[1 - cur];
    switch (l.kind) {
      case LayerKind::ds_conv: ds_conv_forward_into(x, p[0], p[1], p[2], p[3], mid, y); break;
      case LayerKind::standard_conv: y = standard_conv_forward(x, p[0], p[1]); break;
      case LayerKind::max_pool: pool_forward_into(x, PoolMode::max, l.kernel_t, l.kernel_s, y); break;
      case LayerKind::avg_pool: pool_forward_into(x, PoolMode::avg, l.kernel_t, l.kernel_s, y); break;
      case LayerKind::relu: relu_forward_into(x, y); break;
      case LayerKind::flatten:
        y.resize(Shape{x.size()});
        std::copy(x.data().begin(), x.data().end(), y.raw());
        break;
      case LayerKind::dense: dense_forward_into(x, p[0], p[1], y); break;
    }
    cur = 1 - cur;
    if (capture_hint && i == model.hint_layer) r.hint = buf[cur];
  }
  r.logits = buf[cur];
  return r;
}

template <class T>
LayerGrads<T> zero_grads(const BasicModel<T>& model) {
  LayerGrads<T> g(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    for (const auto& p : model.params[i]) g[i].emplace_back(p.shape());
  }
  return g;
}

template <class T>
void backward_chain(const BasicModel<T>& model, const ForwardCache<T>& cache,
                    const BasicTensor<T>& d_logits, const BasicTensor<T>* d_hint, LayerGrads<T>& grads) {
  thread_local BasicTensor<T> buf[2];
  thread_local BasicTensor<T> g_mid;
  std::size_t cur = 0;
  buf[0].resize(d_logits.shape());
  std::copy(d_logits.data().begin(), d_logits.data().end(), buf[0].raw());
  for (std::size_t ii = model.layers.size(); ii-- > 0;) {
    const LayerSpec& l = model.layers[ii];
    const auto& p = model.params[ii];
    auto& gp = grads[ii];
    const BasicTensor<T>& x = cache.acts[ii];
    BasicTensor<T>& g = buf[cur];
    if (d_hint && ii == model.hint_layer) {
      require_shape(d_hint->shape(), g.shape(), "backward_chain hint gradient");
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += (*d_hint)[k];
    }
    const bool need_input_grad = ii > 0;
    BasicTensor<T>& gx = buf[1 - cur];
    switch (l.kind) {
      case LayerKind::ds_conv:
        pointwise_backward(cache.depthwise[ii], p[2], g, gp[2], gp[3], &g_mid);
        depthwise_backward(x, p[0], g_mid, gp[0], gp[1], need_input_grad ? &gx : nullptr);
        break;
      case LayerKind::standard_conv:
        standard_conv_backward(x, p[0], g, gp[0], gp[1], need_input_grad ? &gx : nullptr);
        break;
      case LayerKind::max_pool:
        pool_backward_into(x.shape(), PoolMode::max, l.kernel_t, l.kernel_s, g, &cache.argmax[ii], gx);
        break;
      case LayerKind::avg_pool:
        pool_backward_into(x.shape(), PoolMode::avg, l.kernel_t, l.kernel_s, g, nullptr, gx);
        break;
      case LayerKind::relu:
        relu_backward_into(cache.acts[ii + 1], g, gx);
        break;
      case LayerKind::flatten:
        gx.resize(x.shape());
        std::copy(g.data().begin(), g.data().end(), gx.raw());
        break;
      case LayerKind::dense:
        dense_backward(x, p[0], g, gp[0], gp[1], need_input_grad ? &gx : nullptr);
        break;
    }
    if (!need_input_grad) break;
    cur = 1 - cur;
  }
}

#define DVS_INSTANTIATE_MODEL(T)                                                                    \
  template ModelStats model_stats(const BasicModel<T>&);                                            \
  template ForwardCache<T> forward_cached(const BasicModel<T>&, const BasicTensor<T>&);             \
  template void forward_cached_into(const BasicModel<T>&, const BasicTensor<T>&, ForwardCache<T>&); \
  template ForwardResult<T> model_forward(const BasicModel<T>&, const BasicTensor<T>&, bool);       \
  template LayerGrads<T> zero_grads(const BasicModel<T>&);                                          \
  template void backward_chain(const BasicModel<T>&, const ForwardCache<T>&, const BasicTensor<T>&, \
                               const BasicTensor<T>*, LayerGrads<T>&);

DVS_INSTANTIATE_MODEL(float)
DVS_INSTANTIATE_MODEL(double)

#undef DVS_INSTANTIATE_MODEL

}  // namespace dvs::nn
