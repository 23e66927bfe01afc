#include "slate/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "slate/errors.hpp"

namespace slate {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Path {
  std::complex<double> gain;
  double doppler_hz;
  double delay_s;
  double aod_rad;
  double aoa_rad;
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

void ChannelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("channel config: " + msg); };
  if (n_tx < 1 || n_rx < 1 || n_rb < 1 || rb_per_subband < 1 || n_sb < 1 || n_time < 1) {
    fail("all dimensions must be positive");
  }
  if (n_rb != rb_per_subband * n_sb) {
    fail("n_rb (" + std::to_string(n_rb) + ") must equal rb_per_subband * n_sb (" +
         std::to_string(rb_per_subband * n_sb) + ")");
  }
  if (!(max_doppler_hz >= 0.0)) fail("max_doppler_hz must be >= 0");
  if (n_paths < 1) fail("n_paths must be >= 1");
  if (!(delay_spread_s >= 0.0)) fail("delay_spread_s must be >= 0");
  if (!(t_csi_s > 0.0) || !(subcarrier_spacing_hz > 0.0) || !(carrier_hz > 0.0)) {
    fail("t_csi_s, subcarrier_spacing_hz and carrier_hz must be positive");
  }
}

ChannelRealization::ChannelRealization(int n_time, int n_rb, int n_rx, int n_tx)
    : n_time_(n_time), n_rb_(n_rb), n_rx_(n_rx), n_tx_(n_tx),
      h_(static_cast<std::size_t>(n_time) * n_rb * n_rx * n_tx) {}

ChannelRealization generate_channel(const ChannelConfig& config) {
  config.validate();
  using std::numbers::pi;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Path> paths(static_cast<std::size_t>(config.n_paths));
  for (auto& p : paths) {
    const double re = normal(rng), im = normal(rng);
    p.gain = std::complex<double>(re, im) / std::sqrt(2.0);
    p.doppler_hz = (2.0 * unit(rng) - 1.0) * config.max_doppler_hz;
    p.delay_s = -config.delay_spread_s * std::log1p(-unit(rng));
    p.aod_rad = (unit(rng) - 0.5) * (2.0 * pi / 3.0);
    p.aoa_rad = (unit(rng) - 0.5) * 2.0 * pi;
  }
  const double first = std::min_element(paths.begin(), paths.end(), [](const Path& a, const Path& b) {
                         return a.delay_s < b.delay_s;
                       })->delay_s;
  double total_power = 0.0;
  std::vector<double> power(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    paths[i].delay_s -= first;
    power[i] = config.delay_spread_s > 0.0 ? std::exp(-paths[i].delay_s / config.delay_spread_s) : 1.0;
    total_power += power[i];
  }
  for (std::size_t i = 0; i < paths.size(); ++i) paths[i].gain *= std::sqrt(power[i] / total_power);

  const int nt = config.n_tx, nr = config.n_rx;
  // Steering vectors, half-wavelength spacing, unit norm.
  std::vector<std::complex<double>> a_tx(paths.size() * nt), a_rx(paths.size() * nr);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (int t = 0; t < nt; ++t) {
      a_tx[p * nt + t] = std::polar(1.0 / std::sqrt(double(nt)), pi * t * std::sin(paths[p].aod_rad));
    }
    for (int r = 0; r < nr; ++r) {
      a_rx[p * nr + r] = std::polar(1.0 / std::sqrt(double(nr)), pi * r * std::sin(paths[p].aoa_rad));
    }
  }

  ChannelRealization h(config.n_time, config.n_rb, nr, nt);
  const double df = config.rb_spacing_hz();
  for (int n = 0; n < config.n_time; ++n) {
    for (int f = 0; f < config.n_rb; ++f) {
      for (std::size_t p = 0; p < paths.size(); ++p) {
        const double phase = 2.0 * pi * (paths[p].doppler_hz * n * config.t_csi_s - paths[p].delay_s * f * df);
        const std::complex<double> coeff = paths[p].gain * std::polar(1.0, phase);
        for (int r = 0; r < nr; ++r) {
          const std::complex<double> cr = coeff * a_rx[p * nr + r];
          for (int t = 0; t < nt; ++t) h.at(n, f, r, t) += cr * std::conj(a_tx[p * nt + t]);
        }
      }
    }
  }
  return h;
}

}  // namespace slate
