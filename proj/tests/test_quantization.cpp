#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "slate/errors.hpp"
#include "slate/ops.hpp"
#include "slate/quantization.hpp"
#include "support/random_tensor.hpp"

using namespace slate;

namespace {

// Brute-force nearest level with explicit tie handling.
std::uint32_t nearest_level(double z, int b) {
  const int n = 1 << b;
  const double step = 2.0 / n;
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double level = -1.0 + step / 2 + k * step;
    const double d = std::abs(z - level);
    if (d <= best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("level table and tie-breaks") {
  QuantizerConfig cfg{2};
  CHECK(cfg.levels() == 4);
  CHECK(cfg.level(0) == -0.75);
  CHECK(cfg.level(1) == -0.25);
  CHECK(cfg.level(2) == 0.25);
  CHECK(cfg.level(3) == 0.75);
  CHECK(quantize_index(0.3, cfg) == 2);
  CHECK(quantize_index(0.0, cfg) == 2);
  CHECK(quantize_index(-0.5, cfg) == 1);
  CHECK(quantize_index(0.5, cfg) == 3);
  CHECK(quantize_index(-1.0, cfg) == 0);
  CHECK(quantize_index(1.0, cfg) == 3);
  CHECK(quantize_index(7.0, cfg) == 3);
  CHECK(quantize_index(-7.0, cfg) == 0);
  CHECK_THROWS_AS(quantize_index(std::nan(""), cfg), QuantizationError);
  CHECK_THROWS_AS(QuantizerConfig{0}.validate(), ConfigError);
}

TEST_CASE("index agrees with brute-force nearest level") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int b = 1; b <= 5; ++b) {
    QuantizerConfig cfg{b};
    for (int i = 0; i < 20000; ++i) {
      const double z = u(rng);
      CHECK(quantize_index(z, cfg) == nearest_level(z, b));
    }
  }
}

TEST_CASE("monotone, idempotent, bounded") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int b = 1; b <= 4; ++b) {
    QuantizerConfig cfg{b};
    std::vector<double> z(2000);
    for (auto& v : z) v = u(rng);
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end());
    const auto idx = quantize_indices(sorted, cfg);
    CHECK(std::is_sorted(idx.begin(), idx.end()));

    const auto q = quantize(z, cfg);
    const auto dq = dequantize(q, cfg);
    CHECK(quantize(dq, cfg) == q);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(std::abs(dq[i] - std::clamp(z[i], -1.0, 1.0)) <= cfg.step() / 2 + 1e-15);
    }
  }
}

TEST_CASE("payload packing") {
  QuantizerConfig cfg{2};
  PayloadBits zero{std::vector<std::uint8_t>(1, 0), 4, 2};
  CHECK(dequantize(zero, cfg) == std::vector<double>(4, -0.75));

  // Every index vector of length 4 with 2-bit entries.
  for (std::uint32_t code = 0; code < 256; ++code) {
    std::vector<std::uint32_t> idx(4);
    for (int i = 0; i < 4; ++i) idx[i] = (code >> (2 * i)) & 3u;
    const auto bits = pack_indices(idx, 2);
    REQUIRE(bits.bytes.size() == 1);
    CHECK(bits.bytes[0] == code);  // dimension 0 in the lowest bits
    CHECK(unpack_indices(bits) == idx);
  }

  std::mt19937_64 rng(5);
  for (int b = 1; b <= 7; ++b) {
    std::uniform_int_distribution<std::uint32_t> u(0, (1u << b) - 1);
    for (std::size_t len : {1u, 3u, 64u, 65u, 128u}) {
      std::vector<std::uint32_t> idx(len);
      for (auto& v : idx) v = u(rng);
      const auto bits = pack_indices(idx, b);
      CHECK(bits.bytes.size() == (len * b + 7) / 8);
      CHECK(bits.bit_length() == len * b);
      CHECK(unpack_indices(bits) == idx);
    }
  }
  CHECK(payload_bytes(64, 2) == 16);

  PayloadBits bad{std::vector<std::uint8_t>(3, 0), 4, 2};
  CHECK_THROWS_AS(dequantize(bad, cfg), FormatError);
  PayloadBits wrong_width{std::vector<std::uint8_t>(2, 0), 4, 3};
  CHECK_THROWS_AS(dequantize(wrong_width, cfg), FormatError);
}

TEST_CASE("straight-through quantizer") {
  std::mt19937_64 rng(9);
  Var<double> z = Var<double>::parameter(testing::random_tensor<double>({3, 5}, rng));
  QuantizerConfig cfg{2};
  Var<double> y = ops::ste_quantize(z, cfg);
  const auto ref = quantize_dequantize(z.value(), cfg);
  CHECK(y.value() == ref);
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(y.value()[i] == cfg.level(quantize_index(z.value()[i], cfg)));
  }
  backward(ops::sum(y));
  for (double g : z.grad().values()) CHECK(g == 1.0);
}
