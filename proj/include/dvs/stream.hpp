#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dvs/model.hpp"
#include "dvs/quant.hpp"
#include "dvs/synth.hpp"
#include "dvs/tensor.hpp"

namespace dvs::stream {

inline constexpr std::size_t kWindowT = synth::kTime;
inline constexpr std::size_t kWindowS = synth::kSpace;
inline constexpr double kWindowSeconds = 0.256;
inline constexpr double kSegmentMeters = 12.5;

// Long recording on the 1 ms x 1.25 m grid, row-major (time outer).
struct Trace {
  Tensor values;  // T_total x S_total
  std::string site = "A";

  std::size_t time() const { return values.rank() == 2 ? values.dim(0) : 0; }
  std::size_t space() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

struct ScheduledEvent {
  synth::EventClass cls = synth::EventClass::hammer;
  std::size_t t = 0;  // onset, time index
  std::size_t s = 0;  // spatial centre, point index
  // Event energy over its 256-sample extent relative to the expected
  // background energy of one 256 x 11 window.
  double snr_db = 10.0;
};

// Background of the site profile with events added at their anchors.
// Throws ValueError when an anchor lies outside the trace or the extents are
// smaller than one window.
Trace gen_trace(const synth::SiteProfile& site, std::size_t s_total, std::size_t t_total,
                const std::vector<ScheduledEvent>& events, std::uint64_t seed);

struct Window {
  std::size_t t0 = 0;
  std::size_t s0 = 0;
  Tensor values;  // 256 x 11
};

// 256 x 11 windows at t = 0, hop_t, ... and s = 0, hop_s, ...; time outer.
std::vector<Window> slice_windows(const Trace& trace, std::size_t hop_t = kWindowT, std::size_t hop_s = 10);

// Predicted window count for the given extents.
std::size_t window_count(std::size_t t_total, std::size_t s_total, std::size_t hop_t = kWindowT,
                         std::size_t hop_s = 10);

// --- "DVT1" trace file ------------------------------------------------------------
//   char[4] "DVT1", u16 version (1), u32 T_total, u32 S_total, f32[] row-major.

inline constexpr std::uint16_t kTraceVersion = 1;

std::vector<std::uint8_t> encode_trace(const Trace& trace);
Trace decode_trace(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");
void save_trace(const Trace& trace, const std::string& path);
Trace load_trace(const std::string& path);

// --- range ---------------------------------------------------------------------------

// Fiber length whose 12.5 m segments can each have their fresh 0.256 s window
// classified within one window period: (0.256 / latency) * 12.5 m.
double fiber_range(double latency_seconds);

// --- benchmark -------------------------------------------------------------------------

enum class EngineKind { float_engine, integer_engine };
std::string to_string(EngineKind kind);

struct WorkerReport {
  int worker = 0;
  std::size_t samples = 0;
  double wall_seconds = 0.0;
  double throughput = 0.0;
};

struct BenchReport {
  EngineKind engine = EngineKind::float_engine;
  int workers = 1;
  std::size_t samples = 0;
  double wall_seconds = 0.0;
  double throughput = 0.0;  // samples / wall_seconds
  double latency_p50 = 0.0;
  double latency_p99 = 0.0;
  double latency_mean = 0.0;
  double range_m = 0.0;  // fiber_range(latency_p50)
  std::vector<WorkerReport> per_worker;
  std::vector<int> predictions;  // in sample order
};

// Classifies one model-ready sample.
using Classifier = std::function<int(const Tensor&)>;

struct BenchOptions {
  int workers = 1;
  std::size_t warmup = 10;  // untimed calls per worker before measuring
  std::size_t min_samples = 100;
};

// Sample i goes to worker i % W. Each latency brackets only the forward call.
BenchReport bench(const Classifier& classify, EngineKind kind, const std::vector<Tensor>& samples,
                  const BenchOptions& options = {});
BenchReport bench(const nn::Model& model, const std::vector<Tensor>& samples, const BenchOptions& options = {});
BenchReport bench(const quant::QModel& qmodel, const std::vector<Tensor>& samples, const BenchOptions& options = {});

// Timing values live under the "timing" key; everything else is
// deterministic for fixed inputs.
std::string report_json(const BenchReport& report);
std::string report_csv(const BenchReport& report);

}  // namespace dvs::stream
