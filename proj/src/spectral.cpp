#include "dvs/spectral.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <numbers>

namespace dvs::spectral {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> a) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw ValueError("fft: length " + std::to_string(n) + " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // Twiddles come from a per-length table evaluated directly with cos/sin,
  // so the error stays at a few ulps for every length.
  thread_local std::array<std::vector<std::complex<double>>, 64> tables;
  auto& table = tables[static_cast<std::size_t>(std::countr_zero(n))];
  if (table.size() != n / 2) {
    table.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      table[k] = {std::cos(ang), std::sin(ang)};
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + half] * table[k * stride];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

namespace {

struct Geometry {
  std::size_t t, s;
};

template <class T>
Geometry sample_geometry(const BasicTensor<T>& sample) {
  if (sample.rank() == 2) return {sample.dim(0), sample.dim(1)};
  if (sample.rank() == 3 && sample.dim(0) == 1) return {sample.dim(1), sample.dim(2)};
  throw ShapeError("spectral: expected a T x S or 1 x T x S sample, got " + shape_str(sample.shape()));
}

// Column spectra, unitary scaling: spectra[s][k].
template <class T>
std::vector<std::vector<std::complex<double>>> column_spectra(const BasicTensor<T>& sample) {
  const Geometry g = sample_geometry(sample);
  if (!is_power_of_two(g.t)) {
    throw ValueError("dft_time: time length " + std::to_string(g.t) + " is not a power of two");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(g.t));
  std::vector<std::vector<std::complex<double>>> cols(g.s, std::vector<std::complex<double>>(g.t));
  for (std::size_t s = 0; s < g.s; ++s) {
    for (std::size_t n = 0; n < g.t; ++n) cols[s][n] = static_cast<double>(sample.raw()[n * g.s + s]);
    fft_inplace(cols[s]);
    for (auto& v : cols[s]) v *= scale;
  }
  return cols;
}

}  // namespace

template <class T>
BasicTensor<T> dft_time(const BasicTensor<T>& sample) {
  const Geometry g = sample_geometry(sample);
  const auto cols = column_spectra(sample);
  BasicTensor<T> out(Shape{2, g.t, g.s});
  for (std::size_t s = 0; s < g.s; ++s) {
    for (std::size_t k = 0; k < g.t; ++k) {
      out(0, k, s) = static_cast<T>(cols[s][k].real());
      out(1, k, s) = static_cast<T>(cols[s][k].imag());
    }
  }
  return out;
}

template BasicTensor<float> dft_time(const BasicTensor<float>&);
template BasicTensor<double> dft_time(const BasicTensor<double>&);

std::string to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::dft2ch: return "dft2ch";
    case TargetMode::bandenergy8: return "bandenergy8";
    case TargetMode::magnitude: return "magnitude";
  }
  return "unknown";
}

TargetMode parse_target_mode(const std::string& name) {
  if (name == "dft2ch") return TargetMode::dft2ch;
  if (name == "bandenergy8") return TargetMode::bandenergy8;
  if (name == "magnitude") return TargetMode::magnitude;
  throw ValueError("unknown spectral target mode '" + name + "'");
}

Shape target_shape(TargetMode mode, std::size_t t, std::size_t s) {
  switch (mode) {
    case TargetMode::dft2ch: return {2, t, s};
    case TargetMode::bandenergy8: return {static_cast<std::size_t>(kBands), t, s};
    case TargetMode::magnitude: return {1, t / 2, s};
  }
  throw ValueError("unknown spectral target mode");
}

std::size_t target_channels(TargetMode mode) { return target_shape(mode, 2, 1)[0]; }

Tensor64 band_energy(const Tensor64& sample) {
  const Geometry g = sample_geometry(sample);
  constexpr std::size_t win = kBandWindow;
  constexpr std::size_t half = win / 2;
  constexpr std::size_t bins_per_band = half / kBands;

  std::vector<double> hann(win);
  double norm = 0.0;
  for (std::size_t m = 0; m < win; ++m) {
    hann[m] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(m) / win));
    norm += hann[m] * hann[m];
  }
  // Sum of band energies equals the Hann-weighted local mean square.
  norm *= static_cast<double>(win);

  Tensor64 out(Shape{static_cast<std::size_t>(kBands), g.t, g.s});
  std::vector<std::complex<double>> frame(win);
  for (std::size_t s = 0; s < g.s; ++s) {
    for (std::size_t t = 0; t < g.t; ++t) {
      for (std::size_t m = 0; m < win; ++m) {
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t + m) - static_cast<std::ptrdiff_t>(half);
        const double x = (n >= 0 && n < static_cast<std::ptrdiff_t>(g.t))
                             ? sample.raw()[static_cast<std::size_t>(n) * g.s + s]
                             : 0.0;
        frame[m] = hann[m] * x;
      }
      fft_inplace(frame);
      for (std::size_t b = 0; b < static_cast<std::size_t>(kBands); ++b) {
        const std::size_t lo = b * bins_per_band;
        const std::size_t hi = b + 1 == kBands ? half + 1 : lo + bins_per_band;
        double e = 0.0;
        for (std::size_t j = lo; j < hi; ++j) {
          const double weight = (j == 0 || j == half) ? 1.0 : 2.0;
          e += weight * std::norm(frame[j]);
        }
        out(b, t, s) = e / norm;
      }
    }
  }
  return out;
}

SpectralTarget spectral_target(const Tensor& sample, TargetMode mode) {
  const Geometry g = sample_geometry(sample);
  SpectralTarget r;
  r.mode = mode;
  switch (mode) {
    case TargetMode::dft2ch:
      r.tensor = dft_time(sample);
      break;
    case TargetMode::bandenergy8:
      r.tensor = band_energy(sample.cast<double>()).cast<float>();
      break;
    case TargetMode::magnitude: {
      const auto cols = column_spectra(sample);
      r.tensor = Tensor(Shape{1, g.t / 2, g.s});
      for (std::size_t s = 0; s < g.s; ++s) {
        for (std::size_t k = 0; k < g.t / 2; ++k) r.tensor(0, k, s) = static_cast<float>(std::abs(cols[s][k]));
      }
      break;
    }
  }
  return r;
}

Tensor ss_transform(const Tensor& sample) { return spectral_target(sample, TargetMode::magnitude).tensor; }

}  // namespace dvs::spectral
