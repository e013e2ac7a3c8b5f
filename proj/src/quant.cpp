#include "dvs/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "dvs/binio.hpp"

namespace dvs::quant {

namespace {

constexpr std::int32_t kAccMax = std::numeric_limits<std::int32_t>::max();
constexpr std::int32_t kAccMin = std::numeric_limits<std::int32_t>::min();
constexpr std::int64_t kActMax = std::numeric_limits<std::int16_t>::max();
constexpr std::int64_t kActMin = std::numeric_limits<std::int16_t>::min();

std::string layer_ctx(std::size_t i, QOp op) { return "q-layer " + std::to_string(i) + " (" + to_string(op) + ")"; }

int ceil_log2(std::size_t n) {
  int d = 0;
  while ((std::size_t{1} << d) < n) ++d;
  return d;
}

std::int32_t to_acc_checked(double v, const std::string& what) {
  const double r = std::floor(v + 0.5);
  if (!(r >= static_cast<double>(kAccMin) && r <= static_cast<double>(kAccMax))) {
    throw ValueError(what + ": value does not fit a 32-bit accumulator");
  }
  return static_cast<std::int32_t>(r);
}

}  // namespace

// --- codes -----------------------------------------------------------------------------

std::uint8_t encode_weight(double u) {
  const double a = std::fabs(u);
  if (!(a >= std::exp2(-8.5))) return kZeroCode;  // also catches NaN
  long e = std::lround(std::log2(a));
  e = std::clamp(e, static_cast<long>(kMinExponent), 0L);
  return static_cast<std::uint8_t>(0x80 | (u < 0 ? 0x10 : 0x00) | static_cast<int>(-e));
}

double decode_weight(std::uint8_t code) {
  if (code_is_zero(code)) return 0.0;
  const double mag = std::ldexp(1.0, code_exponent(code));
  return code_negative(code) ? -mag : mag;
}

bool valid_code(std::uint8_t code) {
  if (code == kZeroCode) return true;
  return (code & 0x80) && (code & 0x60) == 0 && (code & 0x0F) <= -kMinExponent;
}

int weight_scale_exponent(const std::vector<double>& weights) {
  double m = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw ValueError("weight_scale_exponent: non-finite weight");
    m = std::max(m, std::fabs(w));
  }
  if (m == 0.0) throw ValueError("weight_scale_exponent: all weights are zero");
  int exp = 0;
  const double mant = std::frexp(m, &exp);  // m = mant * 2^exp, mant in [0.5, 1)
  return mant == 0.5 ? exp - 1 : exp;
}

// --- model -------------------------------------------------------------------------------

std::string to_string(QOp op) {
  switch (op) {
    case QOp::depthwise: return "depthwise";
    case QOp::pointwise: return "pointwise";
    case QOp::standard: return "standard";
    case QOp::relu: return "relu";
    case QOp::max_pool: return "max_pool";
    case QOp::sum_pool: return "sum_pool";
    case QOp::flatten: return "flatten";
    case QOp::dense: return "dense";
  }
  return "unknown";
}

bool has_weights(QOp op) {
  return op == QOp::depthwise || op == QOp::pointwise || op == QOp::standard || op == QOp::dense;
}

double QLayer::weight(std::size_t i) const { return std::ldexp(decode_weight(codes.at(i)), gamma); }

std::size_t QLayer::fan_in() const {
  const auto k = static_cast<std::size_t>(kernel_t) * static_cast<std::size_t>(kernel_s);
  switch (op) {
    case QOp::depthwise:
    case QOp::max_pool:
    case QOp::sum_pool: return k;
    case QOp::pointwise:
    case QOp::dense: return static_cast<std::size_t>(c_in);
    case QOp::standard: return static_cast<std::size_t>(c_in) * k;
    case QOp::relu:
    case QOp::flatten: return 1;
  }
  return 1;
}

std::vector<Shape> infer_shapes(const QModel& q) {
  std::vector<Shape> out;
  Shape cur = q.input;
  for (std::size_t i = 0; i < q.layers.size(); ++i) {
    const QLayer& l = q.layers[i];
    const std::string ctx = layer_ctx(i, l.op);
    const auto want = [&](bool ok, const std::string& msg) {
      if (!ok) throw ShapeError(ctx + ": " + msg + ", input " + shape_str(cur));
    };
    switch (l.op) {
      case QOp::depthwise:
      case QOp::pointwise:
      case QOp::standard:
        want(cur.size() == 3 && static_cast<int>(cur[0]) == l.c_in, "expects " + std::to_string(l.c_in) + " channels");
        want(l.kernel_t > 0 && l.kernel_s > 0 && l.kernel_t % 2 == 1 && l.kernel_s % 2 == 1, "kernel must be odd");
        if (l.op == QOp::depthwise) want(l.c_out == l.c_in, "depthwise must keep the channel count");
        if (l.op == QOp::pointwise) want(l.kernel_t == 1 && l.kernel_s == 1, "pointwise kernel must be 1x1");
        want(l.c_out > 0, "no output channels");
        cur = Shape{static_cast<std::size_t>(l.c_out), cur[1], cur[2]};
        break;
      case QOp::relu:
        break;
      case QOp::max_pool:
      case QOp::sum_pool:
        want(cur.size() == 3 && l.kernel_t > 0 && l.kernel_s > 0 && cur[1] % static_cast<std::size_t>(l.kernel_t) == 0 &&
                 cur[2] % static_cast<std::size_t>(l.kernel_s) == 0,
             "pool kernel must divide the map");
        cur = Shape{cur[0], cur[1] / static_cast<std::size_t>(l.kernel_t), cur[2] / static_cast<std::size_t>(l.kernel_s)};
        break;
      case QOp::flatten:
        cur = Shape{shape_size(cur)};
        break;
      case QOp::dense:
        want(cur.size() == 1 && static_cast<int>(cur[0]) == l.c_in, "expects flat input of " + std::to_string(l.c_in));
        want(l.c_out > 0, "no outputs");
        cur = Shape{static_cast<std::size_t>(l.c_out)};
        break;
    }
    out.push_back(cur);
  }
  return out;
}

int choose_frac_bits(double max_abs) {
  if (!std::isfinite(max_abs)) throw ValueError("choose_frac_bits: non-finite calibration maximum");
  for (int f = 15; f > -16; --f) {
    if (max_abs <= std::ldexp(1.0, 15 - f) - 1.0) return f;
  }
  return -16;
}

namespace {

// Op skeleton (no weights) the given float model lowers to.
std::vector<QLayer> lower_skeleton(const nn::Model& model) {
  const auto shapes = nn::infer_shapes(model.input, model.layers);
  std::vector<QLayer> out;
  bool pending_fold = false;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const nn::LayerSpec& l = model.layers[i];
    const Shape& in = i == 0 ? model.input : shapes[i - 1];
    const int ch = static_cast<int>(in[0]);
    if (pending_fold && l.kind != nn::LayerKind::flatten && l.kind != nn::LayerKind::dense) {
      throw ValueError("quantize: average pool must be followed by flatten and dense, found " +
                       nn::to_string(l.kind) + " at layer " + std::to_string(i));
    }
    QLayer q;
    switch (l.kind) {
      case nn::LayerKind::ds_conv:
        q.op = QOp::depthwise;
        q.c_in = q.c_out = l.c_in;
        q.kernel_t = l.kernel_t;
        q.kernel_s = l.kernel_s;
        out.push_back(q);
        q = QLayer{};
        q.op = QOp::pointwise;
        q.c_in = l.c_in;
        q.c_out = l.c_out;
        break;
      case nn::LayerKind::standard_conv:
        q.op = QOp::standard;
        q.c_in = l.c_in;
        q.c_out = l.c_out;
        q.kernel_t = l.kernel_t;
        q.kernel_s = l.kernel_s;
        break;
      case nn::LayerKind::relu:
        q.op = QOp::relu;
        q.c_in = q.c_out = ch;
        break;
      case nn::LayerKind::max_pool:
      case nn::LayerKind::avg_pool:
        q.op = l.kind == nn::LayerKind::max_pool ? QOp::max_pool : QOp::sum_pool;
        q.c_in = q.c_out = ch;
        q.kernel_t = l.kernel_t;
        q.kernel_s = l.kernel_s;
        if (l.kind == nn::LayerKind::avg_pool) pending_fold = true;
        break;
      case nn::LayerKind::flatten:
        q.op = QOp::flatten;
        q.c_in = q.c_out = static_cast<int>(shape_size(in));
        break;
      case nn::LayerKind::dense:
        q.op = QOp::dense;
        q.c_in = l.c_in;
        q.c_out = l.c_out;
        pending_fold = false;
        break;
    }
    out.push_back(q);
  }
  if (pending_fold) throw ValueError("quantize: average pool without a following dense layer");
  return out;
}

struct Calibration {
  double input = 0.0;
  std::vector<double> layer_max;  // per q-layer output, real units
};

void track(double& m, const Tensor& t) {
  for (float v : t.storage()) m = std::max(m, static_cast<double>(std::fabs(v)));
}

Calibration calibrate(const nn::Model& model, const std::vector<QLayer>& skel, const std::vector<Tensor>& samples) {
  Calibration cal;
  cal.layer_max.assign(skel.size(), 0.0);
  nn::ForwardCache<float> cache;
  for (const Tensor& s : samples) {
    require_shape(s.shape(), model.input, "quantize_pow2 calibration sample");
    nn::forward_cached_into(model, s, cache);
    track(cal.input, cache.acts[0]);
    std::size_t q = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i, ++q) {
      const nn::LayerSpec& l = model.layers[i];
      if (l.kind == nn::LayerKind::ds_conv) {
        track(cal.layer_max[q], cache.depthwise[i]);
        ++q;
      }
      if (l.kind == nn::LayerKind::avg_pool) {
        double m = 0.0;
        track(m, cache.acts[i + 1]);
        cal.layer_max[q] = std::max(cal.layer_max[q], m * l.kernel_t * l.kernel_s);
      } else {
        track(cal.layer_max[q], cache.acts[i + 1]);
      }
    }
  }
  return cal;
}

void set_bias(QLayer& q, const std::vector<double>& b, const std::string& ctx) {
  q.bias.resize(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) q.bias[i] = to_acc_checked(std::ldexp(b[i], q.acc_frac()), ctx + " bias");
}

std::vector<double> as_double(const Tensor& t) { return {t.storage().begin(), t.storage().end()}; }

// Fills codes and scales of every weighted op in `skel`; returns the float
// model carrying the decoded weights.
nn::Model snap_weights(const nn::Model& model, std::vector<QLayer>& skel) {
  nn::Model snapped = model;
  double fold = 1.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i, ++k) {
    auto& p = snapped.params[i];
    const std::string ctx = "layer " + std::to_string(i) + " (" + nn::to_string(model.layers[i].kind) + ")";
    const auto snap = [](QLayer& q, Tensor& t, const std::vector<double>& w, double scale, const std::string& what) {
      q.gamma = 0;
      try {
        q.gamma = weight_scale_exponent(w);
      } catch (const ValueError&) {
        throw ValueError("quantize_pow2: " + what + " has all-zero weights");
      }
      q.codes.resize(w.size());
      for (std::size_t j = 0; j < w.size(); ++j) {
        q.codes[j] = encode_weight(std::ldexp(w[j], -q.gamma));
        t[j] = static_cast<float>(q.weight(j) * scale);
      }
    };
    switch (skel[k].op) {
      case QOp::depthwise:
        snap(skel[k], p[0], as_double(p[0]), 1.0, ctx + " depthwise");
        ++k;
        snap(skel[k], p[2], as_double(p[2]), 1.0, ctx + " pointwise");
        break;
      case QOp::standard:
        snap(skel[k], p[0], as_double(p[0]), 1.0, ctx);
        break;
      case QOp::sum_pool:
        fold = static_cast<double>(skel[k].kernel_t) * skel[k].kernel_s;
        break;
      case QOp::dense: {
        std::vector<double> w = as_double(p[0]);
        for (double& v : w) v /= fold;
        snap(skel[k], p[0], w, fold, ctx);
        fold = 1.0;
        break;
      }
      default:
        break;
    }
  }
  return snapped;
}

// Runs layers [first, end) on an activation.
void forward_from(const nn::Model& m, std::size_t first, const Tensor& in, Tensor buf[2], Tensor& mid) {
  buf[0] = in;
  std::size_t cur = 0;
  for (std::size_t i = first; i < m.layers.size(); ++i) {
    const nn::LayerSpec& l = m.layers[i];
    const auto& p = m.params[i];
    const Tensor& x = buf[cur];
    Tensor& y = buf[1 - cur];
    switch (l.kind) {
      case nn::LayerKind::ds_conv: nn::ds_conv_forward_into(x, p[0], p[1], p[2], p[3], mid, y); break;
      case nn::LayerKind::standard_conv: y = nn::standard_conv_forward(x, p[0], p[1]); break;
      case nn::LayerKind::max_pool: nn::pool_forward_into(x, nn::PoolMode::max, l.kernel_t, l.kernel_s, y); break;
      case nn::LayerKind::avg_pool: nn::pool_forward_into(x, nn::PoolMode::avg, l.kernel_t, l.kernel_s, y); break;
      case nn::LayerKind::relu: nn::relu_forward_into(x, y); break;
      case nn::LayerKind::flatten: y = x.reshaped(Shape{x.size()}); break;
      case nn::LayerKind::dense: nn::dense_forward_into(x, p[0], p[1], y); break;
    }
    cur = 1 - cur;
  }
  if (cur != 0) std::swap(buf[0], buf[1]);
}

// Weights that scale together: `up` (and `up_bias`) by s, `down` by 1/s.
struct ScalePair {
  std::size_t layer = 0;  // first layer whose output changes
  std::vector<std::pair<std::size_t, std::size_t>> up, down;  // (layer, flat index) into params[layer][0 or 2]
  std::vector<std::pair<std::size_t, std::size_t>> up_bias;
  std::vector<std::uint8_t> up_slot, down_slot;  // param slot per entry
};

std::vector<ScalePair> scale_pairs(const nn::Model& m) {
  std::vector<ScalePair> pairs;
  // Consumer of a pointwise output channel: next ds_conv reached through
  // relu / pooling only, or the dense head through flatten.
  const auto consumer = [&](std::size_t from) -> std::ptrdiff_t {
    for (std::size_t j = from + 1; j < m.layers.size(); ++j) {
      const auto k = m.layers[j].kind;
      if (k == nn::LayerKind::ds_conv || k == nn::LayerKind::dense) return static_cast<std::ptrdiff_t>(j);
      if (k == nn::LayerKind::standard_conv) return -1;
    }
    return -1;
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].kind != nn::LayerKind::ds_conv) continue;
    const Tensor& dw = m.params[i][0];
    const std::size_t C = dw.dim(0), K = dw.dim(1) * dw.dim(2), O = m.params[i][2].dim(1);
    for (std::size_t c = 0; c < C; ++c) {
      ScalePair p;
      p.layer = i;
      for (std::size_t k = 0; k < K; ++k) {
        p.up.emplace_back(i, c * K + k);
        p.up_slot.push_back(0);
      }
      p.up_bias.emplace_back(i, c);  // depthwise bias: slot 1
      for (std::size_t o = 0; o < O; ++o) {
        p.down.emplace_back(i, c * O + o);
        p.down_slot.push_back(2);
      }
      pairs.push_back(std::move(p));
    }
    const std::ptrdiff_t nxt = consumer(i);
    if (nxt < 0) continue;
    const auto n = static_cast<std::size_t>(nxt);
    const Tensor& w = m.params[n][0];
    for (std::size_t o = 0; o < O; ++o) {
      ScalePair p;
      p.layer = i;
      for (std::size_t c = 0; c < C; ++c) {
        p.up.emplace_back(i, c * O + o);
        p.up_slot.push_back(2);
      }
      p.up_bias.emplace_back(i, C + o);  // pointwise bias: slot 3, offset past C
      if (m.layers[n].kind == nn::LayerKind::ds_conv) {
        const std::size_t K2 = w.dim(1) * w.dim(2);
        for (std::size_t k = 0; k < K2; ++k) {
          p.down.emplace_back(n, o * K2 + k);
          p.down_slot.push_back(0);
        }
      } else {
        // Dense rows are flattened channel-major, so channel o owns a block of D / O rows.
        const std::size_t D = w.dim(0), cols = w.dim(1), per = D / O;
        for (std::size_t r = o * per; r < (o + 1) * per; ++r) {
          for (std::size_t k = 0; k < cols; ++k) {
            p.down.emplace_back(n, r * cols + k);
            p.down_slot.push_back(0);
          }
        }
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

void apply_scale(nn::Model& m, const ScalePair& p, double s) {
  for (std::size_t j = 0; j < p.up.size(); ++j) {
    float& v = m.params[p.up[j].first][p.up_slot[j]][p.up[j].second];
    v = static_cast<float>(v * s);
  }
  for (const auto& [layer, idx] : p.up_bias) {
    const std::size_t C = m.params[layer][0].dim(0);
    float& v = idx < C ? m.params[layer][1][idx] : m.params[layer][3][idx - C];
    v = static_cast<float>(v * s);
  }
  for (std::size_t j = 0; j < p.down.size(); ++j) {
    float& v = m.params[p.down[j].first][p.down_slot[j]][p.down[j].second];
    v = static_cast<float>(v / s);
  }
}

}  // namespace

nn::Model equalize_scales(const nn::Model& model, const std::vector<Tensor>& samples, int passes) {
  if (samples.empty()) throw ValueError("equalize_scales: no samples");
  if (passes < 0) throw ValueError("equalize_scales: negative pass count");
  std::vector<QLayer> skel = lower_skeleton(model);
  const std::vector<ScalePair> pairs = scale_pairs(model);

  std::vector<Tensor> reference;
  reference.reserve(samples.size());
  for (const Tensor& x : samples) {
    require_shape(x.shape(), model.input, "equalize_scales sample");
    reference.push_back(nn::model_forward(model, x).logits);
  }

  nn::Model eq = model;
  Tensor buf[2], mid;
  // Snapped-model activations entering `start`, for every sample.
  std::vector<Tensor> entry(samples.size());
  std::size_t cached_start = std::numeric_limits<std::size_t>::max();
  const auto deviation = [&](std::size_t start) {
    const nn::Model snapped = snap_weights(eq, skel);
    if (start != cached_start) {
      for (std::size_t n = 0; n < samples.size(); ++n) {
        if (start == 0) {
          entry[n] = samples[n];
        } else {
          nn::ForwardCache<float> cache;
          nn::forward_cached_into(snapped, samples[n], cache);
          entry[n] = cache.acts[start];
        }
      }
      cached_start = start;
    }
    double sum = 0.0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
      forward_from(snapped, start, entry[n], buf, mid);
      for (std::size_t k = 0; k < buf[0].size(); ++k) {
        const double d = static_cast<double>(buf[0][k]) - reference[n][k];
        sum += d * d;
      }
    }
    return sum;
  };

  for (int pass = 0; pass < passes; ++pass) {
    bool changed = false;
    for (const ScalePair& p : pairs) {
      double best = deviation(p.layer);
      int best_j = 0;
      for (int j = 1; j < 16; ++j) {
        const double s = std::exp2(j / 16.0);
        apply_scale(eq, p, s);
        const double d = deviation(p.layer);
        apply_scale(eq, p, 1.0 / s);
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      if (best_j != 0) {
        apply_scale(eq, p, std::exp2(best_j / 16.0));
        changed = true;
      }
    }
    if (!changed) break;
  }
  return eq;
}

QModel quantize_pow2(const nn::Model& original, const std::vector<Tensor>& calibration,
                     const QuantizeOptions& options) {
  if (calibration.empty()) throw ValueError("quantize_pow2: empty calibration set");
  if (calibration.size() < 32) {
    throw ValueError("quantize_pow2: need at least 32 calibration samples, got " + std::to_string(calibration.size()));
  }
  std::vector<QLayer> skel = lower_skeleton(original);
  nn::Model equalized;
  if (options.equalize) {
    const std::size_t n = std::min(options.equalize_samples, calibration.size());
    equalized = equalize_scales(original, {calibration.begin(), calibration.begin() + static_cast<std::ptrdiff_t>(n)},
                                options.equalize_passes);
  }
  const nn::Model& model = options.equalize ? equalized : original;

  // Pass 1: weight codes and scales. They do not depend on calibration, and
  // the snapped float model built from them is what gets calibrated, so the
  // ranges account for the weight rounding.
  const nn::Model snapped = snap_weights(model, skel);
  std::size_t k = 0;

  // Pass 2: activation formats from the snapped model, then biases.
  const Calibration cal = calibrate(snapped, skel, calibration);
  QModel q;
  q.input = model.input;
  q.depth = model.depth;
  q.classes = model.classes;
  q.frac_input = choose_frac_bits(cal.input);
  int frac = q.frac_input;
  k = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i, ++k) {
    const auto& p = model.params[i];
    const std::string ctx = "layer " + std::to_string(i) + " (" + nn::to_string(model.layers[i].kind) + ")";
    QLayer* l = &skel[k];
    l->frac_in = frac;
    switch (l->op) {
      case QOp::depthwise:
        l->frac_out = choose_frac_bits(cal.layer_max[k]);
        set_bias(*l, as_double(p[1]), ctx + " depthwise");
        frac = l->frac_out;
        l = &skel[++k];
        l->frac_in = frac;
        l->frac_out = choose_frac_bits(cal.layer_max[k]);
        set_bias(*l, as_double(p[3]), ctx + " pointwise");
        break;
      case QOp::standard:
        l->frac_out = choose_frac_bits(cal.layer_max[k]);
        set_bias(*l, as_double(p[1]), ctx);
        break;
      case QOp::sum_pool:
        l->frac_out = choose_frac_bits(cal.layer_max[k]);
        break;
      case QOp::dense:
        l->frac_out = l->acc_frac();
        set_bias(*l, as_double(p[1]), ctx);
        break;
      case QOp::pointwise:  // only reached through depthwise
      case QOp::relu:
      case QOp::max_pool:
      case QOp::flatten:
        l->frac_out = frac;
        break;
    }
    frac = l->frac_out;
  }
  q.layers = std::move(skel);
  infer_shapes(q);

  for (std::size_t i = 0; i < calibration.size(); ++i) {
    if (int_forward(q, calibration[i]).overflow) {
      throw ValueError("quantize_pow2: accumulator overflow on calibration sample " + std::to_string(i));
    }
  }
  return q;
}

// --- integer engine ------------------------------------------------------------------------
//
// Arithmetic on the data path is restricted to shifts, additions,
// subtractions and comparisons. Index computations are ordinary.

namespace {

struct Engine {
  bool overflow = false;
  std::size_t clipped = 0;

  void acc(std::int32_t& a, std::int64_t term) {
    std::int64_t s = static_cast<std::int64_t>(a) + term;
    if (s > kAccMax) {
      s = kAccMax;
      overflow = true;
    } else if (s < kAccMin) {
      s = kAccMin;
      overflow = true;
    }
    a = static_cast<std::int32_t>(s);
  }

  // The single rounding point: accumulator (F bits) to int16 (f bits).
  std::int16_t requant(std::int32_t a, int shift) {
    std::int64_t v = a;
    if (shift > 0) {
      v = (v + (std::int64_t{1} << (shift - 1))) >> shift;
    } else if (shift < 0) {
      v = v << -shift;
    }
    if (v > kActMax) {
      v = kActMax;
      ++clipped;
    } else if (v < kActMin) {
      v = kActMin;
      ++clipped;
    }
    return static_cast<std::int16_t>(v);
  }

  static std::int64_t term(std::int16_t x, std::uint8_t code) {
    const std::int64_t v = static_cast<std::int64_t>(x) << (kPrescaleBits + code_exponent(code));
    return code_negative(code) ? -v : v;
  }

  void conv(const QLayer& l, const Shape& in_shape, const std::vector<std::int16_t>& in, std::vector<std::int16_t>& out) {
    const auto T = static_cast<long>(in_shape[1]), S = static_cast<long>(in_shape[2]);
    const long kt = l.kernel_t, ks = l.kernel_s, pt = kt / 2, ps = ks / 2;
    const long plane = T * S;
    const bool dw = l.op == QOp::depthwise;
    const bool pw = l.op == QOp::pointwise;
    const int shift = l.acc_frac() - l.frac_out;
    std::vector<std::int32_t> a(static_cast<std::size_t>(plane));
    out.resize(static_cast<std::size_t>(l.c_out * plane));
    for (long o = 0; o < l.c_out; ++o) {
      std::fill(a.begin(), a.end(), l.bias[static_cast<std::size_t>(o)]);
      const long c_lo = dw ? o : 0, c_hi = dw ? o + 1 : l.c_in;
      for (long c = c_lo; c < c_hi; ++c) {
        const std::int16_t* src = in.data() + c * plane;
        for (long dt = 0; dt < kt; ++dt) {
          for (long ds = 0; ds < ks; ++ds) {
            std::size_t wi;
            if (dw) wi = static_cast<std::size_t>((c * kt + dt) * ks + ds);
            else if (pw) wi = static_cast<std::size_t>(c * l.c_out + o);
            else wi = static_cast<std::size_t>(((o * l.c_in + c) * kt + dt) * ks + ds);
            const std::uint8_t code = l.codes[wi];
            if (code_is_zero(code)) continue;
            const long ot = dt - pt, os = ds - ps;
            for (long t = std::max(0L, -ot); t < std::min(T, T - ot); ++t) {
              const std::int16_t* row = src + (t + ot) * S;
              std::int32_t* arow = a.data() + t * S;
              for (long s = std::max(0L, -os); s < std::min(S, S - os); ++s) acc(arow[s], term(row[s + os], code));
            }
          }
        }
      }
      std::int16_t* dst = out.data() + o * plane;
      for (long p = 0; p < plane; ++p) dst[p] = requant(a[static_cast<std::size_t>(p)], shift);
    }
  }

  void pool(const QLayer& l, const Shape& in_shape, const std::vector<std::int16_t>& in, std::vector<std::int16_t>& out) {
    const auto C = static_cast<long>(in_shape[0]), T = static_cast<long>(in_shape[1]), S = static_cast<long>(in_shape[2]);
    const long kt = l.kernel_t, ks = l.kernel_s, ot = T / kt, os = S / ks;
    const int shift = l.frac_in - l.frac_out;
    out.resize(static_cast<std::size_t>(C * ot * os));
    for (long c = 0; c < C; ++c) {
      for (long t = 0; t < ot; ++t) {
        for (long s = 0; s < os; ++s) {
          const std::int16_t* base = in.data() + (c * T + t * kt) * S + s * ks;
          std::int16_t& dst = out[static_cast<std::size_t>((c * ot + t) * os + s)];
          if (l.op == QOp::max_pool) {
            std::int16_t m = base[0];
            for (long i = 0; i < kt; ++i) {
              for (long j = 0; j < ks; ++j) m = std::max(m, base[i * S + j]);
            }
            dst = m;
          } else {
            std::int32_t sum = 0;
            for (long i = 0; i < kt; ++i) {
              for (long j = 0; j < ks; ++j) acc(sum, base[i * S + j]);
            }
            dst = requant(sum, shift);
          }
        }
      }
    }
  }

  void dense(const QLayer& l, const std::vector<std::int16_t>& in, std::vector<std::int32_t>& logits) {
    logits.assign(l.bias.begin(), l.bias.end());
    for (int k = 0; k < l.c_out; ++k) {
      std::int32_t& a = logits[static_cast<std::size_t>(k)];
      for (int d = 0; d < l.c_in; ++d) {
        const std::uint8_t code = l.codes[static_cast<std::size_t>(d) * static_cast<std::size_t>(l.c_out) +
                                          static_cast<std::size_t>(k)];
        if (!code_is_zero(code)) acc(a, term(in[static_cast<std::size_t>(d)], code));
      }
    }
  }
};

std::int16_t quantize_value(float x, int frac, std::size_t& clipped) {
  double v = std::floor(std::ldexp(static_cast<double>(x), frac) + 0.5);
  if (v > static_cast<double>(kActMax)) {
    v = static_cast<double>(kActMax);
    ++clipped;
  } else if (v < static_cast<double>(kActMin)) {
    v = static_cast<double>(kActMin);
    ++clipped;
  }
  return static_cast<std::int16_t>(v);
}

}  // namespace

std::vector<double> IntResult::dequantized() const {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::ldexp(static_cast<double>(logits[i]), -frac);
  return out;
}

int argmax_int(const std::vector<std::int32_t>& logits) {
  if (logits.empty()) return -1;
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<std::int16_t> quantize_input(const QModel& q, const Tensor& sample) {
  require_shape(sample.shape(), q.input, "quantize_input");
  std::vector<std::int16_t> out(sample.size());
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize_value(sample[i], q.frac_input, clipped);
  return out;
}

IntResult int_forward(const QModel& q, const std::vector<std::int16_t>& input) {
  if (input.size() != shape_size(q.input)) {
    throw ShapeError("int_forward: input has " + std::to_string(input.size()) + " values, model expects " +
                     shape_str(q.input));
  }
  if (q.layers.empty() || q.layers.back().op != QOp::dense) throw ValueError("int_forward: model must end in dense");

  Engine eng;
  IntResult r;
  std::vector<std::int16_t> cur = input, next;
  Shape shape = q.input;
  for (std::size_t i = 0; i < q.layers.size(); ++i) {
    const QLayer& l = q.layers[i];
    switch (l.op) {
      case QOp::depthwise:
      case QOp::pointwise:
      case QOp::standard:
        eng.conv(l, shape, cur, next);
        std::swap(cur, next);
        shape = Shape{static_cast<std::size_t>(l.c_out), shape[1], shape[2]};
        break;
      case QOp::relu:
        for (auto& v : cur) v = std::max<std::int16_t>(v, 0);
        break;
      case QOp::max_pool:
      case QOp::sum_pool:
        eng.pool(l, shape, cur, next);
        std::swap(cur, next);
        shape = Shape{shape[0], shape[1] / static_cast<std::size_t>(l.kernel_t),
                      shape[2] / static_cast<std::size_t>(l.kernel_s)};
        break;
      case QOp::flatten:
        shape = Shape{shape_size(shape)};
        break;
      case QOp::dense:
        if (i + 1 != q.layers.size()) throw ValueError("int_forward: dense must be the last layer");
        eng.dense(l, cur, r.logits);
        break;
    }
  }
  r.frac = q.logit_frac();
  r.predicted = argmax_int(r.logits);
  r.overflow = eng.overflow;
  r.clipped = eng.clipped;
  return r;
}

IntResult int_forward(const QModel& q, const Tensor& sample) {
  require_shape(sample.shape(), q.input, "int_forward");
  std::vector<std::int16_t> in(sample.size());
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = quantize_value(sample[i], q.frac_input, clipped);
  IntResult r = int_forward(q, in);
  r.clipped += clipped;
  return r;
}

// --- comparison ------------------------------------------------------------------------------

void check_architecture(const nn::Model& model, const QModel& q) {
  if (model.input != q.input || model.classes != q.classes) {
    throw ShapeError("architecture mismatch: float model input " + shape_str(model.input) + " / " +
                     std::to_string(model.classes) + " classes vs quantized " + shape_str(q.input) + " / " +
                     std::to_string(q.classes));
  }
  const auto skel = lower_skeleton(model);
  if (skel.size() != q.layers.size()) {
    throw ShapeError("architecture mismatch: " + std::to_string(skel.size()) + " lowered layers vs " +
                     std::to_string(q.layers.size()));
  }
  for (std::size_t i = 0; i < skel.size(); ++i) {
    const QLayer &a = skel[i], &b = q.layers[i];
    if (a.op != b.op || a.c_in != b.c_in || a.c_out != b.c_out || a.kernel_t != b.kernel_t || a.kernel_s != b.kernel_s) {
      throw ShapeError("architecture mismatch at " + layer_ctx(i, b.op));
    }
  }
}

AgreementReport compare_float_int(const nn::Model& model, const QModel& q, const std::vector<Tensor>& inputs,
                                  const std::vector<int>& labels) {
  check_architecture(model, q);
  if (inputs.empty()) throw ValueError("compare_float_int: empty dataset");
  if (labels.size() != inputs.size()) throw ValueError("compare_float_int: label count differs from sample count");

  const auto K = static_cast<std::size_t>(q.classes);
  AgreementReport r;
  r.total = inputs.size();
  std::vector<std::size_t> per_class(K, 0), float_ok(K, 0), int_ok(K, 0);
  std::size_t f_ok = 0, i_ok = 0;
  double dev_sum = 0.0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw ValueError("compare_float_int: label out of range");
    const Tensor logits = nn::model_forward(model, inputs[n]).logits;
    const auto fpred = static_cast<int>(std::max_element(logits.storage().begin(), logits.storage().end()) -
                                        logits.storage().begin());
    const IntResult ir = int_forward(q, inputs[n]);
    const auto deq = ir.dequantized();
    for (std::size_t k = 0; k < K; ++k) {
      const double d = std::fabs(static_cast<double>(logits[k]) - deq[k]);
      r.max_logit_dev = std::max(r.max_logit_dev, d);
      dev_sum += d;
    }
    r.agree += fpred == ir.predicted;
    r.overflow_samples += ir.overflow;
    r.clipped_values += ir.clipped;
    ++per_class[static_cast<std::size_t>(y)];
    if (fpred == y) ++f_ok, ++float_ok[static_cast<std::size_t>(y)];
    if (ir.predicted == y) ++i_ok, ++int_ok[static_cast<std::size_t>(y)];
  }
  const auto N = static_cast<double>(r.total);
  r.agreement = static_cast<double>(r.agree) / N;
  r.float_accuracy = static_cast<double>(f_ok) / N;
  r.int_accuracy = static_cast<double>(i_ok) / N;
  r.mean_logit_dev = dev_sum / (N * static_cast<double>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const double n = per_class[k] ? static_cast<double>(per_class[k]) : 1.0;
    r.float_class_accuracy.push_back(static_cast<double>(float_ok[k]) / n);
    r.int_class_accuracy.push_back(static_cast<double>(int_ok[k]) / n);
    r.class_delta.push_back(r.int_class_accuracy.back() - r.float_class_accuracy.back());
  }
  return r;
}

// --- IR ------------------------------------------------------------------------------------------

namespace {

struct IrWriter {
  std::ostream* out;
  IrLayerStats* st = nullptr;

  std::string addr(int buf, long c, long t, long s) const {
    return "a" + std::to_string(buf) + "[" + std::to_string(c) + "," + std::to_string(t) + "," + std::to_string(s) + "]";
  }
  void line(const std::string& s) {
    if (out) *out << s << '\n';
  }
  void comment(const std::string& s) { line("; " + s); }
  void load(const std::string& dst, const std::string& src) {
    ++st->load;
    if (out) line("LOAD " + dst + " " + src);
  }
  void store(const std::string& dst, const std::string& src) {
    ++st->store;
    if (out) line("STORE " + dst + " " + src);
  }
  void shift(const std::string& dst, const std::string& src, int amount) {
    ++st->shift;
    if (out) line("SHIFT " + dst + " " + src + " " + std::to_string(amount));
  }
  void add(const std::string& dst, const std::string& a, const std::string& b) {
    ++st->add;
    if (out) line("ADD " + dst + " " + a + " " + b);
  }
  void sub(const std::string& dst, const std::string& a, const std::string& b) {
    ++st->sub;
    if (out) line("SUB " + dst + " " + a + " " + b);
  }
  void max(const std::string& dst, const std::string& a, const std::string& b) {
    ++st->max;
    if (out) line("MAX " + dst + " " + a + " " + b);
  }
  void relu(const std::string& dst, const std::string& src) {
    ++st->relu;
    if (out) line("RELU " + dst + " " + src);
  }
  void mac(const std::string& src, std::uint8_t code) {
    shift("r", src, kPrescaleBits + code_exponent(code));
    if (code_negative(code)) sub("acc", "acc", "r");
    else add("acc", "acc", "r");
    ++st->mac_ops;
  }
  // Rounding shift from the accumulator format to the output format.
  void requant(int shift_bits) {
    if (shift_bits > 0) {
      add("acc", "acc", "#" + std::to_string(std::int64_t{1} << (shift_bits - 1)));
      shift("acc", "acc", -shift_bits);
    } else if (shift_bits < 0) {
      shift("acc", "acc", -shift_bits);
    }
  }
};

IrStats emit_impl(const QModel& q, std::ostream* out) {
  const auto shapes = infer_shapes(q);
  IrStats stats;
  IrWriter w{out};
  w.comment("shift-add program: int16 buffers a<i>, int32 register acc, scratch r");
  w.comment("SHIFT dst src n shifts left by n (right when n < 0); STORE saturates to int16");
  w.comment("buffer a0 " + shape_str(q.input) + " frac " + std::to_string(q.frac_input));
  Shape in_shape = q.input;
  for (std::size_t i = 0; i < q.layers.size(); ++i) {
    const QLayer& l = q.layers[i];
    stats.layers.push_back({});
    IrLayerStats& st = stats.layers.back();
    st.op = l.op;
    st.tree_depth = ceil_log2(l.fan_in());
    w.st = &st;
    const int src = static_cast<int>(i), dst = static_cast<int>(i + 1);
    const Shape& out_shape = shapes[i];
    w.comment(layer_ctx(i, l.op) + " in " + shape_str(in_shape) + " out " + shape_str(out_shape) + " frac " +
              std::to_string(l.frac_in) + "->" + std::to_string(l.frac_out) +
              (has_weights(l.op) ? " gamma " + std::to_string(l.gamma) : std::string()));
    switch (l.op) {
      case QOp::depthwise:
      case QOp::pointwise:
      case QOp::standard: {
        const long T = static_cast<long>(in_shape[1]), S = static_cast<long>(in_shape[2]);
        const long kt = l.kernel_t, ks = l.kernel_s, pt = kt / 2, ps = ks / 2;
        w.comment("buffer a" + std::to_string(src) + " zero halo " + std::to_string(pt) + "x" + std::to_string(ps));
        const int shift_bits = l.acc_frac() - l.frac_out;
        for (long o = 0; o < l.c_out; ++o) {
          const long c_lo = l.op == QOp::depthwise ? o : 0, c_hi = l.op == QOp::depthwise ? o + 1 : l.c_in;
          for (long t = 0; t < T; ++t) {
            for (long s = 0; s < S; ++s) {
              w.load("acc", "#" + std::to_string(l.bias[static_cast<std::size_t>(o)]));
              for (long c = c_lo; c < c_hi; ++c) {
                for (long dt = 0; dt < kt; ++dt) {
                  for (long ds = 0; ds < ks; ++ds) {
                    std::size_t wi;
                    if (l.op == QOp::depthwise) wi = static_cast<std::size_t>((c * kt + dt) * ks + ds);
                    else if (l.op == QOp::pointwise) wi = static_cast<std::size_t>(c * l.c_out + o);
                    else wi = static_cast<std::size_t>(((o * l.c_in + c) * kt + dt) * ks + ds);
                    const std::uint8_t code = l.codes[wi];
                    if (code_is_zero(code)) continue;
                    w.mac(w.addr(src, c, t + dt - pt, s + ds - ps), code);
                  }
                }
              }
              w.requant(shift_bits);
              w.store(w.addr(dst, o, t, s), "acc");
            }
          }
        }
        break;
      }
      case QOp::relu: {
        const std::size_t n = shape_size(in_shape);
        for (std::size_t e = 0; e < n; ++e) {
          const std::string a = "a" + std::to_string(src) + "[" + std::to_string(e) + "]";
          w.load("r", a);
          w.relu("r", "r");
          w.store("a" + std::to_string(dst) + "[" + std::to_string(e) + "]", "r");
        }
        break;
      }
      case QOp::max_pool:
      case QOp::sum_pool: {
        const long C = static_cast<long>(out_shape[0]), OT = static_cast<long>(out_shape[1]),
                   OS = static_cast<long>(out_shape[2]);
        const bool is_max = l.op == QOp::max_pool;
        const std::string reg = is_max ? "r" : "acc";
        for (long c = 0; c < C; ++c) {
          for (long t = 0; t < OT; ++t) {
            for (long s = 0; s < OS; ++s) {
              for (long i2 = 0; i2 < l.kernel_t; ++i2) {
                for (long j = 0; j < l.kernel_s; ++j) {
                  const std::string a = w.addr(src, c, t * l.kernel_t + i2, s * l.kernel_s + j);
                  if (i2 == 0 && j == 0) w.load(reg, a);
                  else if (is_max) w.max(reg, reg, a);
                  else w.add(reg, reg, a);
                }
              }
              if (!is_max) w.requant(l.frac_in - l.frac_out);
              w.store(w.addr(dst, c, t, s), reg);
            }
          }
        }
        break;
      }
      case QOp::flatten:
        w.comment("a" + std::to_string(dst) + " aliases a" + std::to_string(src) + " in row-major order");
        break;
      case QOp::dense: {
        for (long k = 0; k < l.c_out; ++k) {
          w.load("acc", "#" + std::to_string(l.bias[static_cast<std::size_t>(k)]));
          for (long d = 0; d < l.c_in; ++d) {
            const std::uint8_t code = l.codes[static_cast<std::size_t>(d * l.c_out + k)];
            if (code_is_zero(code)) continue;
            w.mac("a" + std::to_string(src) + "[" + std::to_string(d) + "]", code);
          }
          w.store("logit[" + std::to_string(k) + "]", "acc");
        }
        w.comment("logits int32 frac " + std::to_string(l.frac_out));
        break;
      }
    }
    stats.total_ops += st.total();
    stats.mac_ops += st.mac_ops;
    stats.total_depth += st.tree_depth;
    in_shape = out_shape;
  }
  return stats;
}

}  // namespace

IrStats emit_shiftadd(const QModel& q, std::ostream& out) { return emit_impl(q, &out); }

IrStats shiftadd_stats(const QModel& q) { return emit_impl(q, nullptr); }

ShiftAddIR export_shiftadd(const QModel& q) {
  std::ostringstream os;
  ShiftAddIR ir;
  ir.stats = emit_impl(q, &os);
  ir.text = std::move(os).str();
  return ir;
}

// --- DVSQ -------------------------------------------------------------------------------------------

std::vector<std::uint8_t> encode_qmodel(const QModel& q) {
  infer_shapes(q);
  binio::Writer w;
  w.magic("DVSQ");
  w.u16(kQModelVersion);
  w.u8(static_cast<std::uint8_t>(q.depth));
  w.u8(static_cast<std::uint8_t>(q.classes));
  for (int i = 0; i < 3; ++i) w.u16(static_cast<std::uint16_t>(q.input.at(static_cast<std::size_t>(i))));
  w.i8(static_cast<std::int8_t>(q.frac_input));
  w.u16(static_cast<std::uint16_t>(q.layers.size()));
  for (const QLayer& l : q.layers) {
    w.u8(static_cast<std::uint8_t>(l.op));
    w.u16(static_cast<std::uint16_t>(l.c_in));
    w.u16(static_cast<std::uint16_t>(l.c_out));
    w.u16(static_cast<std::uint16_t>(l.kernel_t));
    w.u16(static_cast<std::uint16_t>(l.kernel_s));
    w.i8(static_cast<std::int8_t>(l.gamma));
    w.i8(static_cast<std::int8_t>(l.frac_in));
    w.i8(static_cast<std::int8_t>(l.frac_out));
    w.u32(static_cast<std::uint32_t>(l.codes.size()));
    for (std::uint8_t c : l.codes) w.u8(c);
    w.u32(static_cast<std::uint32_t>(l.bias.size()));
    for (std::int32_t b : l.bias) w.i32(b);
  }
  return w.bytes();
}

QModel decode_qmodel(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("DVSQ");
  const std::size_t vpos = r.offset();
  const auto version = r.u16("version");
  if (version != kQModelVersion) {
    throw FormatError(source + ": unsupported DVSQ version " + std::to_string(version) + " at offset " +
                      std::to_string(vpos));
  }
  QModel q;
  q.depth = r.u8("depth");
  q.classes = r.u8("class count");
  q.input = Shape{r.u16("input C"), r.u16("input T"), r.u16("input S")};
  q.frac_input = r.i8("input fraction bits");
  const auto n = r.u16("layer count");
  int frac = q.frac_input;
  for (std::size_t i = 0; i < n; ++i) {
    QLayer l;
    const std::size_t opos = r.offset();
    const auto op = r.u8("layer op");
    if (op > static_cast<std::uint8_t>(QOp::dense)) {
      throw FormatError(source + ": unknown layer op " + std::to_string(op) + " at offset " + std::to_string(opos));
    }
    l.op = static_cast<QOp>(op);
    l.c_in = r.u16("c_in");
    l.c_out = r.u16("c_out");
    l.kernel_t = r.u16("kernel_t");
    l.kernel_s = r.u16("kernel_s");
    l.gamma = r.i8("gamma");
    l.frac_in = r.i8("frac_in");
    l.frac_out = r.i8("frac_out");
    const std::string ctx = source + ": " + layer_ctx(i, l.op);
    if (l.frac_in != frac) throw FormatError(ctx + ": input format does not match the previous layer's output");
    const auto nc = r.u32("code count");
    r.need(nc, "weight codes");
    l.codes.resize(nc);
    for (auto& c : l.codes) {
      const std::size_t cpos = r.offset();
      c = r.u8("code");
      if (!valid_code(c)) throw FormatError(ctx + ": invalid weight code at offset " + std::to_string(cpos));
    }
    const auto nb = r.u32("bias count");
    r.need(static_cast<std::size_t>(nb) * 4, "biases");
    l.bias.resize(nb);
    for (auto& b : l.bias) b = r.i32("bias");
    std::size_t want_codes = 0, want_bias = 0;
    const auto cin = static_cast<std::size_t>(l.c_in), cout = static_cast<std::size_t>(l.c_out),
               k = static_cast<std::size_t>(l.kernel_t) * static_cast<std::size_t>(l.kernel_s);
    switch (l.op) {
      case QOp::depthwise: want_codes = cin * k, want_bias = cin; break;
      case QOp::pointwise: want_codes = cin * cout, want_bias = cout; break;
      case QOp::standard: want_codes = cout * cin * k, want_bias = cout; break;
      case QOp::dense: want_codes = cin * cout, want_bias = cout; break;
      default:
        if (l.frac_out != l.frac_in && l.op != QOp::sum_pool) {
          throw FormatError(ctx + ": format change on a layer without rounding");
        }
        break;
    }
    if (l.codes.size() != want_codes || l.bias.size() != want_bias) {
      throw FormatError(ctx + ": expected " + std::to_string(want_codes) + " codes and " + std::to_string(want_bias) +
                        " biases, got " + std::to_string(l.codes.size()) + " and " + std::to_string(l.bias.size()));
    }
    if (l.op == QOp::dense && l.frac_out != l.acc_frac()) {
      throw FormatError(ctx + ": logit format must equal the accumulator format");
    }
    frac = l.frac_out;
    q.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) {
    throw FormatError(source + ": " + std::to_string(r.remaining()) + " trailing bytes at offset " +
                      std::to_string(r.offset()));
  }
  try {
    infer_shapes(q);
  } catch (const ShapeError& e) {
    throw FormatError(source + ": " + e.what());
  }
  if (q.layers.empty() || q.layers.back().op != QOp::dense || q.layers.back().c_out != q.classes) {
    throw FormatError(source + ": model must end in a dense layer with one output per class");
  }
  return q;
}

void save_qmodel(const QModel& q, const std::string& path) { binio::write_file(path, encode_qmodel(q)); }

QModel load_qmodel(const std::string& path) { return decode_qmodel(binio::read_file(path), path); }

}  // namespace dvs::quant
