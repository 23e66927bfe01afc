#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace slate {

// Synthetic sum-of-paths MIMO channel with per-path Doppler, exponential
// delays and uniform linear arrays at both ends.
struct ChannelConfig {
  int n_tx = 32;
  int n_rx = 4;
  int n_rb = 56;
  int rb_per_subband = 4;
  int n_sb = 14;
  int n_time = 10;
  double t_csi_s = 5e-3;
  int n_paths = 8;
  double max_doppler_hz = 11.1;  // ~3 km/h at 4 GHz
  double carrier_hz = 4.0e9;
  double subcarrier_spacing_hz = 30e3;
  double delay_spread_s = 100e-9;  // mean of the exponential delay draw; 0 puts every path at delay 0
  std::uint64_t seed = 1;

  double rb_spacing_hz() const { return 12.0 * subcarrier_spacing_hz; }
  double subband_spacing_hz() const { return rb_per_subband * rb_spacing_hz(); }

  // Throws ConfigError.
  void validate() const;
};

// H(n, f) for every time sample n and resource block f, each nRx x nTx.
class ChannelRealization {
 public:
  ChannelRealization(int n_time, int n_rb, int n_rx, int n_tx);

  int n_time() const { return n_time_; }
  int n_rb() const { return n_rb_; }
  int n_rx() const { return n_rx_; }
  int n_tx() const { return n_tx_; }

  std::complex<double>& at(int n, int f, int r, int t) { return h_[index(n, f, r, t)]; }
  const std::complex<double>& at(int n, int f, int r, int t) const { return h_[index(n, f, r, t)]; }
  const std::vector<std::complex<double>>& data() const { return h_; }

 private:
  std::size_t index(int n, int f, int r, int t) const {
    return ((static_cast<std::size_t>(n) * n_rb_ + f) * n_rx_ + r) * n_tx_ + t;
  }

  int n_time_, n_rb_, n_rx_, n_tx_;
  std::vector<std::complex<double>> h_;
};

ChannelRealization generate_channel(const ChannelConfig& config);

// Independent per-stream seed derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace slate
