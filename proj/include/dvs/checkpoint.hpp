#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvs/model.hpp"

// "DVSM" model checkpoint, version 1. All integers little-endian.
//
//   char[4]  "DVSM"
//   u16      version (1)
//   u8       depth
//   u8       class count
//   u16 x3   input C, T, S
//   u16      hint layer index
//   u16      layer count
//   per layer:
//     u8     layer kind (nn::LayerKind)
//     u16 x5 kernel_t, kernel_s, stride, c_in, c_out
//     u8     padding (0 = same)
//     u32    parameter value count
//     f32[]  parameters in model order (depthwise kernels, depthwise biases,
//            pointwise weights C_in x C_out row-major, pointwise biases;
//            dense weights D x K, dense bias)
namespace dvs::io {

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_model(const nn::Model& model);
nn::Model decode_model(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

void save_model(const nn::Model& model, const std::string& path);
nn::Model load_model(const std::string& path);

}  // namespace dvs::io
