#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slate/autograd.hpp"

namespace slate {

// Uniform mid-rise scalar quantizer over [-1, 1].
struct QuantizerConfig {
  int b_bits = 2;

  void validate() const;
  std::uint32_t levels() const { return 1u << b_bits; }
  double step() const { return 2.0 / static_cast<double>(levels()); }
  double level(std::uint32_t index) const { return -1.0 + step() * (0.5 + static_cast<double>(index)); }
};

// Packed payload: dimension i occupies bits [i*b, (i+1)*b), little-endian
// within and across bytes.
struct PayloadBits {
  std::vector<std::uint8_t> bytes;
  std::size_t l_dim = 0;
  int b_bits = 0;

  std::size_t bit_length() const { return l_dim * static_cast<std::size_t>(b_bits); }
  friend bool operator==(const PayloadBits&, const PayloadBits&) = default;
};

std::size_t payload_bytes(std::size_t l_dim, int b_bits);

// Nearest-level index; exact ties go to the higher index. Values outside
// [-1, 1] saturate. Throws QuantizationError on NaN.
std::uint32_t quantize_index(double z, const QuantizerConfig& cfg);

std::vector<std::uint32_t> quantize_indices(std::span<const double> z, const QuantizerConfig& cfg);

PayloadBits pack_indices(std::span<const std::uint32_t> indices, int b_bits);
std::vector<std::uint32_t> unpack_indices(const PayloadBits& bits);

PayloadBits quantize(std::span<const double> z, const QuantizerConfig& cfg);
// Throws FormatError when the payload does not match the configured width.
std::vector<double> dequantize(const PayloadBits& bits, const QuantizerConfig& cfg);

// Elementwise dequantize(quantize(.)) on a tensor.
template <typename T>
Tensor<T> quantize_dequantize(const Tensor<T>& z, const QuantizerConfig& cfg);

namespace ops {

// Forward: quantize_dequantize(z). Backward: identity.
template <typename T>
Var<T> ste_quantize(const Var<T>& z, const QuantizerConfig& cfg);

}  // namespace ops
}  // namespace slate
