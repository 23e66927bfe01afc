#include <string>

#include "binary_io.hpp"
#include "slate/csi.hpp"

namespace slate {

namespace {
constexpr char kMagic[4] = {'S', 'L', 'T', 'E'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  const ChannelConfig& c = d.config;
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(d.split));
  w.u8(0);
  for (int v : {c.n_tx, c.n_rx, c.n_rb, c.rb_per_subband, c.n_sb, c.n_time, c.n_paths, d.rank}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u64(c.seed);
  for (double v : {c.t_csi_s, c.max_doppler_hz, c.carrier_hz, c.subcarrier_spacing_hz, c.delay_spread_s}) w.f64(v);
  w.u64(d.samples.size());
  for (const auto& s : d.samples) {
    if (s.n_time() != c.n_time || s.rank() != d.rank || s.n_tx() != c.n_tx || s.n_sb() != c.n_sb) {
      throw DimensionError("dataset sample dimensions do not match the dataset header");
    }
    for (const auto& v : s.data()) {
      w.f32(static_cast<float>(v.real()));
      w.f32(static_cast<float>(v.imag()));
    }
  }
  return std::move(w.buffer());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "dataset");
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw FormatError("dataset: bad magic, expected \"SLTE\"", 0);
  }
  const std::size_t version_at = r.offset();
  if (const auto v = r.u16(); v != kVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(v), version_at);
  }
  Dataset d;
  const std::size_t split_at = r.offset();
  const std::uint8_t split = r.u8();
  if (split > 1 || r.u8() != 0) throw FormatError("dataset: bad split/reserved header byte", split_at);
  d.split = static_cast<Split>(split);

  const std::size_t header_at = r.offset();
  ChannelConfig& c = d.config;
  c.n_tx = static_cast<int>(r.u32());
  c.n_rx = static_cast<int>(r.u32());
  c.n_rb = static_cast<int>(r.u32());
  c.rb_per_subband = static_cast<int>(r.u32());
  c.n_sb = static_cast<int>(r.u32());
  c.n_time = static_cast<int>(r.u32());
  c.n_paths = static_cast<int>(r.u32());
  d.rank = static_cast<int>(r.u32());
  c.seed = r.u64();
  c.t_csi_s = r.f64();
  c.max_doppler_hz = r.f64();
  c.carrier_hz = r.f64();
  c.subcarrier_spacing_hz = r.f64();
  c.delay_spread_s = r.f64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset: invalid header: ") + e.what(), header_at);
  }
  if (d.rank < 1 || d.rank > std::min(c.n_rx, c.n_tx)) {
    throw FormatError("dataset: invalid rank " + std::to_string(d.rank), header_at);
  }
  const std::uint64_t count = r.u64();
  const std::uint64_t per_sample = std::uint64_t(c.n_time) * d.rank * c.n_tx * c.n_sb;
  if (count > r.remaining() / (per_sample * 8)) {
    r.fail("truncated payload, header declares " + std::to_string(count) + " samples of " +
           std::to_string(per_sample * 8) + " bytes but only " + std::to_string(r.remaining()) + " bytes remain");
  }
  const std::uint64_t payload = count * per_sample * 8;
  if (r.remaining() != payload) {
    throw FormatError("dataset: " + std::to_string(r.remaining() - payload) + " trailing bytes after payload",
                      r.offset() + payload);
  }
  d.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    CsiSequence s(c.n_time, d.rank, c.n_tx, c.n_sb);
    for (auto& v : s.data()) {
      const float re = r.f32();
      const float im = r.f32();
      v = {re, im};
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_dataset(d));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(detail::read_file(path)); }

}  // namespace slate
