#include "dvs/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "dvs/dataset_io.hpp"

namespace dvs::synth {

const std::array<std::string, kClasses>& class_names() {
  static const std::array<std::string, kClasses> names{"hammer", "air_pick", "excavator"};
  return names;
}

std::array<std::size_t, kClasses> Dataset::class_counts() const {
  std::array<std::size_t, kClasses> c{};
  for (const auto& s : samples) c.at(static_cast<std::size_t>(s.label))++;
  return c;
}

bool SiteProfile::valid() const {
  const Range all[] = {drift_hz,          center,          width,          amplitude,        hammer_carrier_hz,
                       hammer_decay_ms,   pick_rate_hz,    pick_carrier_hz, pick_decay_ms,   dig_cutoff_hz,
                       dig_am_hz,         dig_am_depth};
  for (const Range& r : all) {
    if (!r.valid()) return false;
  }
  return noise_level >= 0.0 && pink_fraction >= 0.0 && pink_fraction <= 1.0 && freq_scale > 0.0 &&
         drift >= 0.0 && hammer_extra_impulses >= 0.0 && pick_jitter >= 0.0 && width.lo > 0.0;
}

SiteProfile site_a_profile() { return SiteProfile{}; }

SiteProfile site_b_profile() {
  SiteProfile p;
  p.name = "B";
  p.tag = 1;
  p.noise_level *= 2.0;  // -6 dB SNR
  p.freq_scale = 0.7;
  p.drift = 0.5;
  return p;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double spatial_gain(double s, double centre, double sigma) {
  const double d = (s - centre) / sigma;
  return std::exp(-0.5 * d * d);
}

// Damped oscillation starting at `onset` (ms) into a single temporal trace.
void add_burst(std::vector<double>& trace, double onset, double carrier_hz, double decay_ms, double amp,
               double phase) {
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const double dt = static_cast<double>(t) - onset;
    if (dt < 0.0) continue;
    const double env = std::exp(-dt / decay_ms);
    if (env < 1e-4) break;
    trace[t] += amp * env * std::sin(kTwoPi * carrier_hz * dt / kSampleRateHz + phase);
  }
}

// Second-order Butterworth low-pass (bilinear transform), direct form I.
std::vector<double> lowpass_noise(Rng& rng, std::size_t n, double cutoff_hz) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / kSampleRateHz);
  const double q = std::numbers::sqrt2 / 2.0;
  const double norm = 1.0 / (1.0 + k / q + k * k);
  const double b0 = k * k * norm, b1 = 2.0 * b0, b2 = b0;
  const double a1 = 2.0 * (k * k - 1.0) * norm, a2 = (1.0 - k / q + k * k) * norm;
  constexpr std::size_t warmup = 256;
  std::vector<double> out(n);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  double power = 0.0;
  for (std::size_t i = 0; i < n + warmup; ++i) {
    const double x = rng.normal();
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    if (i >= warmup) {
      out[i - warmup] = y;
      power += y * y;
    }
  }
  const double rms = std::sqrt(power / static_cast<double>(n));
  if (rms > 0) {
    for (double& v : out) v /= rms;
  }
  return out;
}

}  // namespace

void render_event(EventClass cls, const SiteProfile& p, Rng& rng, Tensor& field, double t0, double s0) {
  if (field.rank() != 2) throw ShapeError("render_event: field must be T x S, got " + shape_str(field.shape()));
  const std::size_t nt = field.dim(0), ns = field.dim(1);
  const std::size_t len = std::min<std::size_t>(kTime, nt - std::min<std::size_t>(nt, static_cast<std::size_t>(t0)));
  const double centre = s0 >= 0.0 ? s0 : p.center.draw(rng);
  const double sigma = p.width.draw(rng);
  const double amp = p.amplitude.draw(rng);
  std::vector<double> trace(len, 0.0);

  switch (cls) {
    case EventClass::hammer: {
      const int count = 1 + rng.poisson(p.hammer_extra_impulses);
      for (int i = 0; i < count; ++i) {
        const double onset = rng.uniform(0.0, static_cast<double>(kTime) * 0.85);
        const double carrier = p.hammer_carrier_hz.draw(rng) * p.freq_scale;
        const double decay = p.hammer_decay_ms.draw(rng);
        const double a = amp * rng.uniform(0.6, 1.0);
        add_burst(trace, onset, carrier, decay, a, rng.uniform(0.0, kTwoPi));
      }
      break;
    }
    case EventClass::air_pick: {
      const double period = kSampleRateHz / p.pick_rate_hz.draw(rng);
      const double carrier = p.pick_carrier_hz.draw(rng) * p.freq_scale;
      const double decay = p.pick_decay_ms.draw(rng);
      double onset = -rng.uniform(0.0, period);
      while (onset < static_cast<double>(len)) {
        const double c = carrier * (1.0 + p.pick_jitter * (2.0 * rng.uniform() - 1.0));
        add_burst(trace, onset, c, decay, amp * rng.uniform(0.8, 1.0), rng.uniform(0.0, kTwoPi));
        onset += period * (1.0 + p.pick_jitter * (2.0 * rng.uniform() - 1.0));
      }
      break;
    }
    case EventClass::excavator: {
      const double cutoff = p.dig_cutoff_hz.draw(rng) * p.freq_scale;
      const double am_hz = p.dig_am_hz.draw(rng);
      const double depth = p.dig_am_depth.draw(rng);
      const double phase = rng.uniform(0.0, kTwoPi);
      trace = lowpass_noise(rng, len, cutoff);
      for (std::size_t t = 0; t < len; ++t) {
        trace[t] *= amp * 0.5 * (1.0 + depth * std::sin(kTwoPi * am_hz * static_cast<double>(t) / kSampleRateHz + phase));
      }
      break;
    }
  }

  const auto t_off = static_cast<std::size_t>(t0);
  for (std::size_t s = 0; s < ns; ++s) {
    const double g = spatial_gain(static_cast<double>(s), centre, sigma);
    if (g < 1e-6) continue;
    for (std::size_t t = 0; t < len; ++t) field.raw()[(t_off + t) * ns + s] += static_cast<float>(g * trace[t]);
  }
}

namespace {

// Paul Kellet's economy 1/f filter: three leaky integrators plus a direct tap.
constexpr double kPinkPole[3] = {0.99765, 0.96300, 0.57000};
constexpr double kPinkTap[4] = {0.0990460, 0.2965164, 1.0526913, 0.1848};
// Long enough for the slowest pole (time constant ~425 steps) to settle.
constexpr std::size_t kPinkWarmup = 1024;

// 1 / stationary standard deviation of the filter driven by unit white noise.
double pink_norm() {
  double var = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double ai = i < 3 ? kPinkPole[i] : 0.0, aj = j < 3 ? kPinkPole[j] : 0.0;
      var += kPinkTap[i] * kPinkTap[j] / (1.0 - ai * aj);
    }
  }
  return 1.0 / std::sqrt(var);
}

struct PinkFilter {
  double b[3] = {0.0, 0.0, 0.0};
  double step(double w) {
    double y = kPinkTap[3] * w;
    for (int i = 0; i < 3; ++i) {
      b[i] = kPinkPole[i] * b[i] + kPinkTap[i] * w;
      y += b[i];
    }
    return y;
  }
};

}  // namespace

void add_background(const SiteProfile& p, Rng& rng, Tensor& field) {
  const std::size_t nt = field.dim(0), ns = field.dim(1);
  static const double norm = pink_norm();
  const double white = p.noise_level * std::sqrt(1.0 - p.pink_fraction);
  const double pink = p.noise_level * std::sqrt(p.pink_fraction) * norm;
  const double drift_hz = p.drift_hz.draw(rng);
  const double drift_phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t s = 0; s < ns; ++s) {
    PinkFilter f;
    for (std::size_t k = 0; k < kPinkWarmup; ++k) f.step(rng.normal());
    const double col_phase = drift_phase + 0.3 * rng.normal();
    for (std::size_t t = 0; t < nt; ++t) {
      const double y = f.step(rng.normal());
      double v = white * rng.normal() + pink * y;
      if (p.drift > 0.0) v += p.drift * std::sin(kTwoPi * drift_hz * static_cast<double>(t) / kSampleRateHz + col_phase);
      field.raw()[t * ns + s] += static_cast<float>(v);
    }
  }
}

Sample gen_sample(EventClass cls, const SiteProfile& profile, std::uint64_t seed) {
  if (!profile.valid()) throw ValueError("gen_sample: invalid site profile '" + profile.name + "'");
  Rng rng(seed);
  Sample s;
  s.values = Tensor(Shape{kTime, kSpace});
  s.label = static_cast<int>(cls);
  s.site = profile.tag;
  render_event(cls, profile, rng, s.values);
  add_background(profile, rng, s.values);
  return s;
}

Dataset gen_site(const std::array<int, kClasses>& counts, const SiteProfile& profile, std::uint64_t seed) {
  Dataset d;
  std::uint64_t index = 0;
  for (int c = 0; c < kClasses; ++c) {
    if (counts[c] < 0) throw ValueError("gen_site: negative count for class " + class_names()[c]);
    for (int i = 0; i < counts[c]; ++i) {
      d.samples.push_back(
          gen_sample(static_cast<EventClass>(c), profile, derive_seed(seed, 0x5173ULL + profile.tag, index++)));
    }
  }
  return d;
}

namespace {

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

nlohmann::json profile_json(const SiteProfile& p) {
  return {{"name", p.name},
          {"tag", p.tag},
          {"noise_level", p.noise_level},
          {"pink_fraction", p.pink_fraction},
          {"freq_scale", p.freq_scale},
          {"drift", p.drift},
          {"drift_hz", range_json(p.drift_hz)},
          {"center", range_json(p.center)},
          {"width", range_json(p.width)},
          {"amplitude", range_json(p.amplitude)},
          {"hammer_extra_impulses", p.hammer_extra_impulses},
          {"hammer_carrier_hz", range_json(p.hammer_carrier_hz)},
          {"hammer_decay_ms", range_json(p.hammer_decay_ms)},
          {"pick_rate_hz", range_json(p.pick_rate_hz)},
          {"pick_carrier_hz", range_json(p.pick_carrier_hz)},
          {"pick_decay_ms", range_json(p.pick_decay_ms)},
          {"pick_jitter", p.pick_jitter},
          {"dig_cutoff_hz", range_json(p.dig_cutoff_hz)},
          {"dig_am_hz", range_json(p.dig_am_hz)},
          {"dig_am_depth", range_json(p.dig_am_depth)}};
}

}  // namespace

GeneratedFiles gen_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory '" + out_dir + "': " + ec.message());

  GeneratedFiles files;
  const std::filesystem::path dir(out_dir);
  files.site_a_path = (dir / "site_a.dvs1").string();
  files.site_b_path = (dir / "site_b.dvs1").string();
  files.manifest_path = (dir / "manifest.json").string();

  const Dataset a = gen_site(spec.counts_a, spec.site_a, spec.seed);
  io::save_dataset(a, files.site_a_path);
  files.site_a_count = a.samples.size();
  const Dataset b = gen_site(spec.counts_b, spec.site_b, spec.seed);
  io::save_dataset(b, files.site_b_path);
  files.site_b_count = b.samples.size();

  nlohmann::json manifest = {
      {"format", "DVS1"},
      {"classes", class_names()},
      {"seed", spec.seed},
      {"time", kTime},
      {"space", kSpace},
      {"sites",
       {{"A", {{"file", "site_a.dvs1"}, {"counts", spec.counts_a}, {"total", a.samples.size()}, {"profile", profile_json(spec.site_a)}}},
        {"B", {{"file", "site_b.dvs1"}, {"counts", spec.counts_b}, {"total", b.samples.size()}, {"profile", profile_json(spec.site_b)}}}}}};
  std::ofstream out(files.manifest_path);
  if (!out) throw IoError("cannot open '" + files.manifest_path + "' for writing");
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write failure on '" + files.manifest_path + "'");
  return files;
}

Tensor standardize(const Tensor& values) {
  const std::size_t n = values.size();
  Tensor out(values.shape());
  if (n == 0) return out;
  double mean = 0.0;
  for (float v : values.data()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : values.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (!(var > 1e-20 * (1.0 + mean * mean))) return out;
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>((values[i] - mean) * inv);
  return out;
}

}  // namespace dvs::synth
