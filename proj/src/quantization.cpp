#include "slate/quantization.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "slate/errors.hpp"
#include "slate/ops.hpp"

namespace slate {

void QuantizerConfig::validate() const {
  if (b_bits < 1 || b_bits > 16) {
    throw ConfigError("quantizer bits must be in [1, 16], got " + std::to_string(b_bits));
  }
}

std::size_t payload_bytes(std::size_t l_dim, int b_bits) {
  return (l_dim * static_cast<std::size_t>(b_bits) + 7) / 8;
}

std::uint32_t quantize_index(double z, const QuantizerConfig& cfg) {
  if (std::isnan(z)) throw QuantizationError("cannot quantize NaN");
  const double levels = static_cast<double>(cfg.levels());
  // Level k covers [-1 + k*step, -1 + (k+1)*step); its midpoint is the
  // reconstruction value, so the floor lands on the nearest level and a
  // boundary value belongs to the upper cell.
  const double cell = std::floor((z + 1.0) / cfg.step());
  if (cell < 0.0) return 0;
  if (cell >= levels) return cfg.levels() - 1;
  return static_cast<std::uint32_t>(cell);
}

std::vector<std::uint32_t> quantize_indices(std::span<const double> z, const QuantizerConfig& cfg) {
  cfg.validate();
  std::vector<std::uint32_t> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = quantize_index(z[i], cfg);
  return out;
}

PayloadBits pack_indices(std::span<const std::uint32_t> indices, int b_bits) {
  QuantizerConfig{b_bits}.validate();
  PayloadBits out;
  out.l_dim = indices.size();
  out.b_bits = b_bits;
  out.bytes.assign(payload_bytes(indices.size(), b_bits), 0);
  const std::uint32_t limit = 1u << b_bits;
  std::size_t bit = 0;
  for (std::uint32_t idx : indices) {
    if (idx >= limit) throw std::out_of_range("index " + std::to_string(idx) + " exceeds " + std::to_string(b_bits) + " bits");
    for (int k = 0; k < b_bits; ++k, ++bit) {
      if ((idx >> k) & 1u) out.bytes[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_indices(const PayloadBits& bits) {
  if (bits.b_bits < 1 || bits.b_bits > 16) throw FormatError("payload bit width out of range", 0);
  if (bits.bytes.size() != payload_bytes(bits.l_dim, bits.b_bits)) {
    throw FormatError("payload holds " + std::to_string(bits.bytes.size()) + " bytes, expected " +
                          std::to_string(payload_bytes(bits.l_dim, bits.b_bits)),
                      bits.bytes.size());
  }
  std::vector<std::uint32_t> out(bits.l_dim, 0);
  std::size_t bit = 0;
  for (auto& idx : out) {
    for (int k = 0; k < bits.b_bits; ++k, ++bit) {
      if ((bits.bytes[bit / 8] >> (bit % 8)) & 1u) idx |= 1u << k;
    }
  }
  return out;
}

PayloadBits quantize(std::span<const double> z, const QuantizerConfig& cfg) {
  const auto idx = quantize_indices(z, cfg);
  return pack_indices(idx, cfg.b_bits);
}

std::vector<double> dequantize(const PayloadBits& bits, const QuantizerConfig& cfg) {
  cfg.validate();
  if (bits.b_bits != cfg.b_bits) {
    throw FormatError("payload uses " + std::to_string(bits.b_bits) + " bits per entry, quantizer expects " +
                          std::to_string(cfg.b_bits),
                      0);
  }
  const auto idx = unpack_indices(bits);
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = cfg.level(idx[i]);
  return out;
}

template <typename T>
Tensor<T> quantize_dequantize(const Tensor<T>& z, const QuantizerConfig& cfg) {
  cfg.validate();
  Tensor<T> out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = static_cast<T>(cfg.level(quantize_index(static_cast<double>(z[i]), cfg)));
  }
  return out;
}

namespace ops {

template <typename T>
Var<T> ste_quantize(const Var<T>& z, const QuantizerConfig& cfg) {
  return identity_gradient(z, quantize_dequantize(z.value(), cfg));
}

}  // namespace ops

template Tensor<float> quantize_dequantize(const Tensor<float>&, const QuantizerConfig&);
template Tensor<double> quantize_dequantize(const Tensor<double>&, const QuantizerConfig&);
template Var<float> ops::ste_quantize(const Var<float>&, const QuantizerConfig&);
template Var<double> ops::ste_quantize(const Var<double>&, const QuantizerConfig&);

}  // namespace slate
