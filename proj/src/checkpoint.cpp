#include "dvs/checkpoint.hpp"

#include "dvs/binio.hpp"

namespace dvs::io {

std::vector<std::uint8_t> encode_model(const nn::Model& model) {
  binio::Writer w;
  w.magic("DVSM");
  w.u16(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(model.depth));
  w.u8(static_cast<std::uint8_t>(model.classes));
  for (std::size_t d : model.input) w.u16(static_cast<std::uint16_t>(d));
  w.u16(static_cast<std::uint16_t>(model.hint_layer));
  w.u16(static_cast<std::uint16_t>(model.layers.size()));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const nn::LayerSpec& l = model.layers[i];
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u16(static_cast<std::uint16_t>(l.kernel_t));
    w.u16(static_cast<std::uint16_t>(l.kernel_s));
    w.u16(static_cast<std::uint16_t>(l.stride));
    w.u16(static_cast<std::uint16_t>(l.c_in));
    w.u16(static_cast<std::uint16_t>(l.c_out));
    w.u8(static_cast<std::uint8_t>(l.padding));
    std::uint32_t count = 0;
    for (const auto& p : model.params[i]) count += static_cast<std::uint32_t>(p.size());
    w.u32(count);
    for (const auto& p : model.params[i]) {
      for (float v : p.data()) w.f32(v);
    }
  }
  return w.bytes();
}

nn::Model decode_model(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  r.expect_magic("DVSM");
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version) + " at offset 4");
  }
  nn::Model m;
  m.depth = r.u8("depth");
  m.classes = r.u8("class count");
  m.input = Shape{r.u16("input C"), r.u16("input T"), r.u16("input S")};
  m.hint_layer = r.u16("hint layer");
  const std::uint16_t n = r.u16("layer count");
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const std::uint8_t kind = r.u8("layer kind");
    if (kind > static_cast<std::uint8_t>(nn::LayerKind::dense)) {
      throw FormatError(source + ": unknown layer kind " + std::to_string(kind) + " at offset " + std::to_string(at));
    }
    nn::LayerSpec l;
    l.kind = static_cast<nn::LayerKind>(kind);
    l.kernel_t = r.u16("kernel_t");
    l.kernel_s = r.u16("kernel_s");
    l.stride = r.u16("stride");
    l.c_in = r.u16("c_in");
    l.c_out = r.u16("c_out");
    const std::uint8_t pad = r.u8("padding");
    if (pad != 0) throw FormatError(source + ": unknown padding mode at offset " + std::to_string(r.offset() - 1));
    m.layers.push_back(l);
    m.params.emplace_back();
    const std::uint32_t count = r.u32("parameter count");
    r.need(static_cast<std::size_t>(count) * 4, "parameters");
    std::vector<float> flat(count);
    for (float& v : flat) v = r.f32();
    // Split by the shapes implied by the architecture (validated below).
    Shape flat_shape{flat.size()};
    m.params.back().push_back(Tensor(std::move(flat_shape), std::move(flat)));
  }
  if (r.remaining() != 0) {
    throw FormatError(source + ": " + std::to_string(r.remaining()) + " trailing bytes at offset " +
                      std::to_string(r.offset()));
  }

  const auto shapes = nn::infer_shapes(m.input, m.layers);
  if (m.hint_layer >= m.layers.size()) throw FormatError(source + ": hint layer index out of range");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto ps = nn::param_shapes(m.layers[i], i == 0 ? m.input : shapes[i - 1]);
    const std::vector<float> flat = m.params[i][0].storage();
    std::size_t want = 0;
    for (const auto& s : ps) want += shape_size(s);
    if (want != flat.size()) {
      throw FormatError(source + ": layer " + std::to_string(i) + " holds " + std::to_string(flat.size()) +
                        " parameters, architecture needs " + std::to_string(want));
    }
    m.params[i].clear();
    std::size_t off = 0;
    for (const auto& s : ps) {
      const std::size_t len = shape_size(s);
      m.params[i].push_back(Tensor(s, std::vector<float>(flat.begin() + static_cast<std::ptrdiff_t>(off),
                                                         flat.begin() + static_cast<std::ptrdiff_t>(off + len))));
      off += len;
    }
  }
  return m;
}

void save_model(const nn::Model& model, const std::string& path) { binio::write_file(path, encode_model(model)); }

nn::Model load_model(const std::string& path) { return decode_model(binio::read_file(path), path); }

}  // namespace dvs::io
