#include "dvs/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "dvs/binio.hpp"
#include "json.hpp"

namespace dvs::stream {

Trace gen_trace(const synth::SiteProfile& site, std::size_t s_total, std::size_t t_total,
                const std::vector<ScheduledEvent>& events, std::uint64_t seed) {
  if (!site.valid()) throw ValueError("gen_trace: invalid site profile '" + site.name + "'");
  if (t_total < kWindowT || s_total < kWindowS) {
    throw ValueError("gen_trace: extents " + std::to_string(t_total) + "x" + std::to_string(s_total) +
                     " smaller than one " + std::to_string(kWindowT) + "x" + std::to_string(kWindowS) + " window");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.t >= t_total || e.s >= s_total) {
      throw ValueError("gen_trace: event " + std::to_string(i) + " anchor (" + std::to_string(e.t) + ", " +
                       std::to_string(e.s) + ") outside " + std::to_string(t_total) + "x" + std::to_string(s_total));
    }
    if (!std::isfinite(e.snr_db)) throw ValueError("gen_trace: event " + std::to_string(i) + " has non-finite SNR");
  }

  Trace trace;
  trace.site = site.name;
  trace.values = Tensor(Shape{t_total, s_total});
  Rng bg(derive_seed(seed, 0x6267));
  synth::add_background(site, bg, trace.values);

  const double window_noise = site.noise_level * site.noise_level * static_cast<double>(kWindowT * kWindowS);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    Rng rng(derive_seed(seed, 0x7472, i));
    Tensor local(Shape{kWindowT, s_total});
    synth::render_event(e.cls, site, rng, local, 0.0, static_cast<double>(e.s));
    double energy = 0.0;
    for (float v : local.storage()) energy += static_cast<double>(v) * v;
    double gain = 1.0;
    if (window_noise > 0.0 && energy > 0.0) gain = std::sqrt(window_noise * std::pow(10.0, e.snr_db / 10.0) / energy);
    const std::size_t rows = std::min(kWindowT, t_total - e.t);
    for (std::size_t t = 0; t < rows; ++t) {
      float* dst = trace.values.raw() + (e.t + t) * s_total;
      const float* src = local.raw() + t * s_total;
      for (std::size_t s = 0; s < s_total; ++s) dst[s] += static_cast<float>(gain * src[s]);
    }
  }
  return trace;
}

std::size_t window_count(std::size_t t_total, std::size_t s_total, std::size_t hop_t, std::size_t hop_s) {
  if (hop_t == 0 || hop_s == 0) throw ValueError("slice_windows: hops must be positive");
  if (t_total < kWindowT || s_total < kWindowS) return 0;
  return ((t_total - kWindowT) / hop_t + 1) * ((s_total - kWindowS) / hop_s + 1);
}

std::vector<Window> slice_windows(const Trace& trace, std::size_t hop_t, std::size_t hop_s) {
  const std::size_t T = trace.time(), S = trace.space();
  if (window_count(T, S, hop_t, hop_s) == 0) {
    throw ValueError("slice_windows: trace " + std::to_string(T) + "x" + std::to_string(S) + " is smaller than one " +
                     std::to_string(kWindowT) + "x" + std::to_string(kWindowS) + " window");
  }
  std::vector<Window> out;
  out.reserve(window_count(T, S, hop_t, hop_s));
  for (std::size_t t0 = 0; t0 + kWindowT <= T; t0 += hop_t) {
    for (std::size_t s0 = 0; s0 + kWindowS <= S; s0 += hop_s) {
      Window w{t0, s0, Tensor(Shape{kWindowT, kWindowS})};
      for (std::size_t t = 0; t < kWindowT; ++t) {
        const float* src = trace.values.raw() + (t0 + t) * S + s0;
        std::copy(src, src + kWindowS, w.values.raw() + t * kWindowS);
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

// --- DVT1 -----------------------------------------------------------------------------

std::vector<std::uint8_t> encode_trace(const Trace& trace) {
  if (trace.values.rank() != 2) throw ShapeError("encode_trace: trace must be T x S");
  binio::Writer w;
  w.magic("DVT1");
  w.u16(kTraceVersion);
  w.u32(static_cast<std::uint32_t>(trace.time()));
  w.u32(static_cast<std::uint32_t>(trace.space()));
  for (float v : trace.values.storage()) w.f32(v);
  return w.bytes();
}

Trace decode_trace(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("DVT1");
  const std::size_t vpos = r.offset();
  const auto version = r.u16("version");
  if (version != kTraceVersion) {
    throw FormatError(source + ": unsupported DVT1 version " + std::to_string(version) + " at offset " +
                      std::to_string(vpos));
  }
  const std::size_t T = r.u32("T_total"), S = r.u32("S_total");
  r.need(T * S * 4, "trace values");
  Trace trace;
  trace.values = Tensor(Shape{T, S});
  for (float& v : trace.values.storage()) v = r.f32("value");
  if (r.remaining() != 0) {
    throw FormatError(source + ": " + std::to_string(r.remaining()) + " trailing bytes at offset " +
                      std::to_string(r.offset()));
  }
  return trace;
}

void save_trace(const Trace& trace, const std::string& path) { binio::write_file(path, encode_trace(trace)); }

Trace load_trace(const std::string& path) { return decode_trace(binio::read_file(path), path); }

// --- range -----------------------------------------------------------------------------

double fiber_range(double latency_seconds) {
  if (!(latency_seconds > 0.0) || !std::isfinite(latency_seconds)) {
    throw ValueError("fiber_range: latency must be positive and finite, got " + std::to_string(latency_seconds));
  }
  return kWindowSeconds / latency_seconds * kSegmentMeters;
}

// --- bench -----------------------------------------------------------------------------

std::string to_string(EngineKind kind) { return kind == EngineKind::float_engine ? "float" : "integer"; }

namespace {

double percentile(const std::vector<double>& sorted, double p) {
  // Nearest rank.
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

}  // namespace

BenchReport bench(const Classifier& classify, EngineKind kind, const std::vector<Tensor>& samples,
                  const BenchOptions& options) {
  if (samples.empty()) throw ValueError("bench: no samples");
  if (options.workers <= 0) throw ValueError("bench: worker count must be positive");
  if (samples.size() < options.min_samples) {
    throw ValueError("bench: need at least " + std::to_string(options.min_samples) + " samples, got " +
                     std::to_string(samples.size()));
  }
  using Clock = std::chrono::steady_clock;
  const auto W = static_cast<std::size_t>(options.workers);

  BenchReport rep;
  rep.engine = kind;
  rep.workers = options.workers;
  rep.samples = samples.size();
  rep.predictions.assign(samples.size(), -1);
  std::vector<double> latency(samples.size(), 0.0);
  rep.per_worker.resize(W);

  const auto run = [&](std::size_t w) {
    for (std::size_t i = 0; i < options.warmup; ++i) static_cast<void>(classify(samples[(w + i * W) % samples.size()]));
    const auto start = Clock::now();
    std::size_t count = 0;
    for (std::size_t i = w; i < samples.size(); i += W, ++count) {
      const auto t0 = Clock::now();
      const int pred = classify(samples[i]);
      const auto t1 = Clock::now();
      rep.predictions[i] = pred;
      latency[i] = std::chrono::duration<double>(t1 - t0).count();
    }
    auto& wr = rep.per_worker[w];
    wr.worker = static_cast<int>(w);
    wr.samples = count;
    wr.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    wr.throughput = wr.wall_seconds > 0.0 ? static_cast<double>(count) / wr.wall_seconds : 0.0;
  };

  // Aggregate wall time is the slowest worker's timed span (warm-up excluded).
  if (W == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(W);
    for (std::size_t w = 0; w < W; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& wr : rep.per_worker) rep.wall_seconds = std::max(rep.wall_seconds, wr.wall_seconds);
  rep.throughput = rep.wall_seconds > 0.0 ? static_cast<double>(rep.samples) / rep.wall_seconds : 0.0;

  std::vector<double> sorted = latency;
  std::sort(sorted.begin(), sorted.end());
  rep.latency_p50 = percentile(sorted, 0.50);
  rep.latency_p99 = percentile(sorted, 0.99);
  double sum = 0.0;
  for (double v : latency) sum += v;
  rep.latency_mean = sum / static_cast<double>(latency.size());
  rep.range_m = rep.latency_p50 > 0.0 ? fiber_range(rep.latency_p50) : 0.0;
  return rep;
}

BenchReport bench(const nn::Model& model, const std::vector<Tensor>& samples, const BenchOptions& options) {
  const Classifier f = [&model](const Tensor& x) {
    const Tensor logits = nn::model_forward(model, x).logits;
    return static_cast<int>(std::max_element(logits.storage().begin(), logits.storage().end()) -
                            logits.storage().begin());
  };
  return bench(f, EngineKind::float_engine, samples, options);
}

BenchReport bench(const quant::QModel& qmodel, const std::vector<Tensor>& samples, const BenchOptions& options) {
  const Classifier f = [&qmodel](const Tensor& x) { return quant::int_forward(qmodel, x).predicted; };
  return bench(f, EngineKind::integer_engine, samples, options);
}

std::string report_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["engine"] = to_string(r.engine);
  j["workers"] = r.workers;
  j["samples"] = r.samples;
  j["predictions"] = r.predictions;
  auto& t = j["timing"];
  t["wall_seconds"] = r.wall_seconds;
  t["throughput_samples_per_s"] = r.throughput;
  t["latency_p50_s"] = r.latency_p50;
  t["latency_p99_s"] = r.latency_p99;
  t["latency_mean_s"] = r.latency_mean;
  t["range_m"] = r.range_m;
  t["per_worker"] = nlohmann::ordered_json::array();
  for (const auto& w : r.per_worker) {
    t["per_worker"].push_back(
        {{"worker", w.worker}, {"samples", w.samples}, {"wall_seconds", w.wall_seconds}, {"throughput", w.throughput}});
  }
  return j.dump(2) + "\n";
}

std::string report_csv(const BenchReport& r) {
  std::string out = "scope,engine,workers,samples,wall_seconds,throughput,latency_p50_s,latency_p99_s,range_m\n";
  const auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  out += "aggregate," + to_string(r.engine) + "," + std::to_string(r.workers) + "," + std::to_string(r.samples) + "," +
         num(r.wall_seconds) + "," + num(r.throughput) + "," + num(r.latency_p50) + "," + num(r.latency_p99) + "," +
         num(r.range_m) + "\n";
  for (const auto& w : r.per_worker) {
    out += "worker" + std::to_string(w.worker) + "," + to_string(r.engine) + ",1," + std::to_string(w.samples) + "," +
           num(w.wall_seconds) + "," + num(w.throughput) + ",,,\n";
  }
  return out;
}

}  // namespace dvs::stream
