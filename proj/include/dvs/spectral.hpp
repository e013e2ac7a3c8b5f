#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "dvs/tensor.hpp"

namespace dvs::spectral {

// In-place iterative radix-2 FFT (forward, unnormalized). Length must be a
// power of two.
void fft_inplace(std::span<std::complex<double>> data);

bool is_power_of_two(std::size_t n);

// Unitary DFT along time for every spatial column of a T x S (or 1 x T x S)
// sample. Returns 2 x T x S: plane 0 real, plane 1 imaginary.
template <class T>
BasicTensor<T> dft_time(const BasicTensor<T>& sample);

enum class TargetMode { dft2ch, bandenergy8, magnitude };

std::string to_string(TargetMode mode);
TargetMode parse_target_mode(const std::string& name);

inline constexpr int kBands = 8;
inline constexpr std::size_t kBandWindow = 64;

struct SpectralTarget {
  TargetMode mode = TargetMode::dft2ch;
  Tensor tensor;  // dft2ch: 2xTxS, bandenergy8: 8xTxS, magnitude: 1x(T/2)xS
};

// Shape of the target tensor for a given input time/space extent.
Shape target_shape(TargetMode mode, std::size_t t, std::size_t s);

// Channel count a hint regressor must produce for this mode.
std::size_t target_channels(TargetMode mode);

SpectralTarget spectral_target(const Tensor& sample, TargetMode mode);

// Double-precision band-energy envelopes; bandenergy8 targets are these
// values rounded to float.
Tensor64 band_energy(const Tensor64& sample);

// One-sided |X[k]|, k = 0..T/2-1, as the 1 x (T/2) x S spatial-spectral input.
Tensor ss_transform(const Tensor& sample);

}  // namespace dvs::spectral
