#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dvs/random.hpp"
#include "dvs/tensor.hpp"

namespace dvs::synth {

inline constexpr std::size_t kTime = 256;    // 1 ms steps
inline constexpr std::size_t kSpace = 11;    // 1.25 m steps
inline constexpr int kClasses = 3;
inline constexpr double kSampleRateHz = 1000.0;

enum class EventClass : int { hammer = 0, air_pick = 1, excavator = 2 };

const std::array<std::string, kClasses>& class_names();

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }
  bool valid() const { return hi >= lo; }
};

struct Sample {
  Tensor values;  // kTime x kSpace, time-major
  int label = 0;
  int site = 0;   // 0 = site A, 1 = site B
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t time = kTime;
  std::size_t space = kSpace;
  int classes = kClasses;

  std::array<std::size_t, kClasses> class_counts() const;
};

// Per-class signature ranges and site-level channel effects.
struct SiteProfile {
  std::string name = "A";
  int tag = 0;

  // Background: white + 1/f mix at `noise_level` RMS relative to unit event
  // peak amplitude; `pink_fraction` of the noise power is 1/f.
  double noise_level = 0.3;
  double pink_fraction = 0.5;
  // Multiplies every event carrier / cutoff frequency.
  double freq_scale = 1.0;
  // Slow baseline wander amplitude and frequency.
  double drift = 0.0;
  Range drift_hz{0.5, 3.0};

  Range center{3.0, 7.0};       // spatial envelope centre, points
  Range width{1.5, 3.5};        // spatial envelope sigma, points
  Range amplitude{0.7, 1.0};

  // hammer: 1 + Poisson(extra) damped impulses
  double hammer_extra_impulses = 2.0;
  Range hammer_carrier_hz{80.0, 200.0};
  Range hammer_decay_ms{5.0, 15.0};

  // air pick: quasi-periodic burst train
  Range pick_rate_hz{8.0, 16.0};
  Range pick_carrier_hz{150.0, 350.0};
  Range pick_decay_ms{4.0, 8.0};
  double pick_jitter = 0.05;  // relative period jitter

  // excavator: low-pass coloured noise with slow amplitude modulation
  Range dig_cutoff_hz{10.0, 30.0};
  Range dig_am_hz{0.5, 2.0};
  Range dig_am_depth{0.3, 0.8};

  bool valid() const;
};

SiteProfile site_a_profile();
// Shifted deployment site: 6 dB lower SNR, carriers moved, baseline drift.
SiteProfile site_b_profile();

struct DatasetSpec {
  std::array<int, kClasses> counts_a{3332, 3558, 3359};
  std::array<int, kClasses> counts_b{268, 330, 277};
  std::uint64_t seed = 7;
  SiteProfile site_a = site_a_profile();
  SiteProfile site_b = site_b_profile();
};

// Adds one event of `cls` into `field` (T x S, time-major) at time offset
// `t0` and spatial centre `s0` (negative = draw from the profile).
void render_event(EventClass cls, const SiteProfile& profile, Rng& rng, Tensor& field, double t0 = 0.0,
                  double s0 = -1.0);

// Adds the site background (white + 1/f noise, drift) to `field`.
void add_background(const SiteProfile& profile, Rng& rng, Tensor& field);

// One raw (unstandardized) sample; deterministic in (class, profile, seed).
Sample gen_sample(EventClass cls, const SiteProfile& profile, std::uint64_t seed);

// All samples of one site; sample i uses sub-seed derive_seed(seed, site, i).
Dataset gen_site(const std::array<int, kClasses>& counts, const SiteProfile& profile, std::uint64_t seed);

struct GeneratedFiles {
  std::string site_a_path;
  std::string site_b_path;
  std::string manifest_path;
  std::size_t site_a_count = 0;
  std::size_t site_b_count = 0;
};

// Writes site_a.dvs1, site_b.dvs1 and manifest.json into `out_dir`.
GeneratedFiles gen_dataset(const DatasetSpec& spec, const std::string& out_dir);

// Per-sample z-score over all values; constant samples map to zeros.
Tensor standardize(const Tensor& values);

}  // namespace dvs::synth
