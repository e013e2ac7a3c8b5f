#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dvs/model.hpp"
#include "dvs/tensor.hpp"

// Power-of-two ("shift-add") quantization and the integer inference engine.
//
// Weights become 0 or +-2^e * 2^gamma with e in [-8, 0] and a per-layer
// power-of-two scale 2^gamma. Activations are int16 with a per-layer number
// of fraction bits f; accumulators are int32.
//
// A weighted layer multiplies by shifting the input left by (8 + e): the
// 8-bit pre-scale keeps every shift non-negative, so the accumulator holds
// fraction bits F = f_in + 8 - gamma. The only rounding happens once per
// layer, when the accumulator is brought back to the int16 output format
// (round half up). Dense logits stay in accumulator format.
namespace dvs::quant {

inline constexpr int kMinExponent = -8;
inline constexpr int kPrescaleBits = 8;

// --- weight codes ----------------------------------------------------------------
//
// One byte per weight: 0x00 is zero, otherwise 0x80 | sign << 4 | -e.

inline constexpr std::uint8_t kZeroCode = 0x00;

// Quantizes a normalized weight u = w / 2^gamma (|u| <= 1).
std::uint8_t encode_weight(double u);
// Decoded normalized value: 0 or +-2^e.
double decode_weight(std::uint8_t code);
bool valid_code(std::uint8_t code);

inline bool code_is_zero(std::uint8_t code) { return code == kZeroCode; }
inline bool code_negative(std::uint8_t code) { return (code & 0x10) != 0; }
inline int code_exponent(std::uint8_t code) { return -static_cast<int>(code & 0x0F); }

// gamma = ceil(log2 max|w|); throws ValueError when every weight is zero.
int weight_scale_exponent(const std::vector<double>& weights);

// --- quantized model ---------------------------------------------------------------

enum class QOp : std::uint8_t {
  depthwise = 0,
  pointwise = 1,
  standard = 2,
  relu = 3,
  max_pool = 4,
  sum_pool = 5,  // average pool with the divisor folded into the next dense layer
  flatten = 6,
  dense = 7,
};

std::string to_string(QOp op);
bool has_weights(QOp op);

struct QLayer {
  QOp op = QOp::relu;
  int c_in = 0;
  int c_out = 0;
  int kernel_t = 1;
  int kernel_s = 1;
  int gamma = 0;     // weight scale exponent (weighted ops)
  int frac_in = 0;   // fraction bits of the int16 input
  int frac_out = 0;  // fraction bits of the output; dense: of the int32 logits
  std::vector<std::uint8_t> codes;  // same layout as the float parameters
  std::vector<std::int32_t> bias;   // accumulator format

  // Fraction bits of the accumulator for weighted ops.
  int acc_frac() const { return frac_in + kPrescaleBits - gamma; }
  // Real value of weight i.
  double weight(std::size_t i) const;
  std::size_t fan_in() const;

  friend bool operator==(const QLayer&, const QLayer&) = default;
};

struct QModel {
  Shape input{1, 256, 11};
  int depth = 3;
  int classes = 3;
  int frac_input = 0;
  std::vector<QLayer> layers;

  int logit_frac() const { return layers.empty() ? 0 : layers.back().frac_out; }

  friend bool operator==(const QModel&, const QModel&) = default;
};

// Output shape of every q-layer; validates the chain.
std::vector<Shape> infer_shapes(const QModel& qmodel);

// Largest f with max_abs <= 2^(15 - f) - 1, clamped to [-16, 15].
int choose_frac_bits(double max_abs);

struct QuantizeOptions {
  // Rescale channels before snapping (see equalize_scales).
  bool equalize = true;
  int equalize_passes = 2;
  std::size_t equalize_samples = 256;  // leading calibration samples used
};

// Function-preserving channel rescaling. A positive per-channel factor s moves
// from one weight group to the next without changing the float model: a
// depthwise channel (kernel and bias) against its pointwise row, and a
// pointwise output column (weights and bias) against the next depthwise
// channel or the dense rows it feeds (ReLU and pooling commute with s > 0).
// Factors are in [1, 2) per pair, picked by coordinate descent to minimize
// the squared logit deviation of the snapped model from `model` on `samples`.
// Powers of two leave the snapped weights unchanged, so only the position
// between two grid points matters.
nn::Model equalize_scales(const nn::Model& model, const std::vector<Tensor>& samples, int passes = 2);

// Requires at least 32 calibration samples (model-ready inputs). Throws
// ValueError when a layer's weights are all zero, when the architecture
// cannot be lowered, or when an accumulator overflows on calibration data.
QModel quantize_pow2(const nn::Model& model, const std::vector<Tensor>& calibration,
                     const QuantizeOptions& options = {});

// --- integer inference -------------------------------------------------------------

struct IntResult {
  std::vector<std::int32_t> logits;
  int frac = 0;  // logit fraction bits
  int predicted = -1;
  bool overflow = false;     // some accumulator saturated
  std::size_t clipped = 0;   // activations saturated to the int16 range

  std::vector<double> dequantized() const;
};

// Round-half-up conversion of a model-ready input to the input format.
std::vector<std::int16_t> quantize_input(const QModel& qmodel, const Tensor& sample);

IntResult int_forward(const QModel& qmodel, const std::vector<std::int16_t>& input);
IntResult int_forward(const QModel& qmodel, const Tensor& sample);

// Lowest index wins ties.
int argmax_int(const std::vector<std::int32_t>& logits);

// --- float / integer comparison ------------------------------------------------------

struct AgreementReport {
  std::size_t total = 0;
  std::size_t agree = 0;
  double agreement = 0.0;
  double float_accuracy = 0.0;
  double int_accuracy = 0.0;
  std::vector<double> float_class_accuracy;
  std::vector<double> int_class_accuracy;
  std::vector<double> class_delta;  // int minus float
  double max_logit_dev = 0.0;
  double mean_logit_dev = 0.0;
  std::size_t overflow_samples = 0;
  std::size_t clipped_values = 0;
};

// Throws ShapeError on architecture mismatch and ValueError on empty input.
AgreementReport compare_float_int(const nn::Model& model, const QModel& qmodel, const std::vector<Tensor>& inputs,
                                  const std::vector<int>& labels);

// Throws ShapeError unless `qmodel` is a lowering of `model`'s layer chain.
void check_architecture(const nn::Model& model, const QModel& qmodel);

// --- shift-add IR -----------------------------------------------------------------------

struct IrLayerStats {
  QOp op = QOp::relu;
  std::uint64_t load = 0, store = 0, shift = 0, add = 0, sub = 0, max = 0, relu = 0;
  std::uint64_t mac_ops = 0;  // SHIFT + ADD/SUB pairs contributed by nonzero weights
  int tree_depth = 0;         // ceil(log2 fan-in)

  std::uint64_t total() const { return load + store + shift + add + sub + max + relu; }
};

struct IrStats {
  std::vector<IrLayerStats> layers;
  std::uint64_t total_ops = 0;
  std::uint64_t mac_ops = 0;
  int total_depth = 0;
};

struct ShiftAddIR {
  std::string text;
  IrStats stats;
};

// Streams the full program to `out`, one op per line; comment lines start
// with ';'. Padded taps read the zero halo of their buffer.
IrStats emit_shiftadd(const QModel& qmodel, std::ostream& out);
// Counts only.
IrStats shiftadd_stats(const QModel& qmodel);
ShiftAddIR export_shiftadd(const QModel& qmodel);

// --- "DVSQ" file ---------------------------------------------------------------------------
//
//   char[4] "DVSQ", u16 version (1), u8 depth, u8 classes, u16 x3 input,
//   i8 input fraction bits, u16 layer count, then per layer:
//     u8 op, u16 c_in, u16 c_out, u16 kernel_t, u16 kernel_s,
//     i8 gamma, i8 frac_in, i8 frac_out,
//     u32 code count, u8[] codes, u32 bias count, i32[] biases.

inline constexpr std::uint16_t kQModelVersion = 1;

std::vector<std::uint8_t> encode_qmodel(const QModel& qmodel);
QModel decode_qmodel(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");
void save_qmodel(const QModel& qmodel, const std::string& path);
QModel load_qmodel(const std::string& path);

}  // namespace dvs::quant
