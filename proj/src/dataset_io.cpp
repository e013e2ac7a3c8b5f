#include "dvs/dataset_io.hpp"

#include "dvs/binio.hpp"

namespace dvs::io {

std::vector<std::uint8_t> encode_dataset(const synth::Dataset& data) {
  binio::Writer w;
  w.magic("DVS1");
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.samples.size()));
  w.u16(static_cast<std::uint16_t>(data.time));
  w.u16(static_cast<std::uint16_t>(data.space));
  w.u8(static_cast<std::uint8_t>(data.classes));
  const std::size_t n = data.time * data.space;
  for (const synth::Sample& s : data.samples) {
    require_shape(s.values.shape(), Shape{data.time, data.space}, "encode_dataset sample");
    w.u8(static_cast<std::uint8_t>(s.label));
    w.u8(static_cast<std::uint8_t>(s.site));
    for (std::size_t i = 0; i < n; ++i) w.f32(s.values[i]);
  }
  return w.bytes();
}

synth::Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("DVS1");
  const std::uint16_t version = r.u16("version");
  if (version != kDatasetVersion) {
    throw FormatError(source + ": unsupported DVS1 version " + std::to_string(version) + " at offset 4");
  }
  synth::Dataset d;
  const std::uint32_t count = r.u32("count");
  d.time = r.u16("T");
  d.space = r.u16("S");
  d.classes = r.u8("class count");
  const std::size_t n = d.time * d.space;
  const std::size_t header = r.offset();
  const std::size_t want = header + static_cast<std::size_t>(count) * (2 + 4 * n);
  if (bytes.size() != want) {
    throw FormatError(source + ": " + (bytes.size() < want ? "truncated" : "oversized") + " file: header at offset " +
                      std::to_string(header) + " declares " + std::to_string(count) +
                      " samples, expected length " + std::to_string(want) + " bytes, actual " +
                      std::to_string(bytes.size()));
  }
  d.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    synth::Sample s;
    const std::size_t at = r.offset();
    s.label = r.u8("label");
    if (s.label >= d.classes) {
      throw FormatError(source + ": label " + std::to_string(s.label) + " out of range at offset " + std::to_string(at));
    }
    s.site = r.u8("site tag");
    std::vector<float> values(n);
    for (float& v : values) v = r.f32("sample values");
    s.values = Tensor(Shape{d.time, d.space}, std::move(values));
    d.samples.push_back(std::move(s));
  }
  return d;
}

void save_dataset(const synth::Dataset& data, const std::string& path) {
  binio::write_file(path, encode_dataset(data));
}

synth::Dataset load_dataset(const std::string& path) { return decode_dataset(binio::read_file(path), path); }

}  // namespace dvs::io
