#include "slate/checkpoint.hpp"

#include "binary_io.hpp"
#include "slate/config_json.hpp"
#include "slate/errors.hpp"

namespace slate {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u16(0);
  w.str(nlohmann::json{{"model", c.model}, {"meta", c.meta}}.dump());
  w.u64(c.step);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a checkpoint file (bad magic)", 0);
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  r.u16();
  const std::size_t header_at = r.offset();
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(r.str());
    c.model = header.at("model").get<ModelConfig>();
    c.meta = header.value("meta", nlohmann::json::object());
    c.model.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), header_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), header_at);
  }
  c.step = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::size_t shape_at = r.offset();
    Shape shape(r.u8());
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw FormatError("zero extent in tensor " + name, shape_at);
      n *= d;
    }
    if (n > r.remaining() / 4) r.fail("tensor " + name + " truncated");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    c.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last tensor");
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

template <typename T>
Checkpoint make_checkpoint(const SlateModel<T>& model) {
  Checkpoint c;
  c.model = model.config();
  for (const auto& p : model.parameters().items()) c.tensors.emplace_back(p.name, p.var.value().template cast<float>());
  return c;
}

template <typename T>
void load_parameters(SlateModel<T>& model, const Checkpoint& c) {
  for (auto& p : model.parameters().items()) {
    const Tensor<float>* t = c.find(p.name);
    if (t == nullptr) throw FormatError("checkpoint lacks parameter " + p.name, 0);
    if (t->shape() != p.var.shape()) {
      throw FormatError("parameter " + p.name + " has shape " + to_string(t->shape()) + " in checkpoint, model expects " +
                            to_string(p.var.shape()),
                        0);
    }
    Var<T> v = p.var;
    v.mutable_value() = t->template cast<T>();
  }
}

template <typename T>
SlateModel<T> model_from_checkpoint(const Checkpoint& c) {
  SlateModel<T> model(c.model, 0);
  load_parameters(model, c);
  return model;
}

template Checkpoint make_checkpoint(const SlateModel<float>&);
template Checkpoint make_checkpoint(const SlateModel<double>&);
template void load_parameters(SlateModel<float>&, const Checkpoint&);
template void load_parameters(SlateModel<double>&, const Checkpoint&);
template SlateModel<float> model_from_checkpoint(const Checkpoint&);
template SlateModel<double> model_from_checkpoint(const Checkpoint&);

}  // namespace slate
