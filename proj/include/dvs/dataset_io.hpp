#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvs/synth.hpp"

// "DVS1" sample file, version 1, little-endian:
//   char[4] "DVS1" | u16 version | u32 count | u16 T (256) | u16 S (11) | u8 classes (3)
//   per sample: u8 label | u8 site tag | T*S f32, time-major
namespace dvs::io {

inline constexpr std::uint16_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const synth::Dataset& data);
synth::Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

void save_dataset(const synth::Dataset& data, const std::string& path);
synth::Dataset load_dataset(const std::string& path);

}  // namespace dvs::io
