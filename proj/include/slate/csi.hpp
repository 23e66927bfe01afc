#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slate/channel.hpp"

namespace slate {

// Precoder columns V(n) for every time sample and transmission layer,
// stored [n_time][rank][n_tx][n_sb].
class CsiSequence {
 public:
  CsiSequence() = default;
  CsiSequence(int n_time, int rank, int n_tx, int n_sb);

  int n_time() const { return n_time_; }
  int rank() const { return rank_; }
  int n_tx() const { return n_tx_; }
  int n_sb() const { return n_sb_; }

  std::complex<double>& at(int n, int layer, int t, int f) { return v_[index(n, layer, t, f)]; }
  const std::complex<double>& at(int n, int layer, int t, int f) const { return v_[index(n, layer, t, f)]; }

  // Column v_f for (time, layer, subband), length n_tx.
  std::vector<std::complex<double>> column(int n, int layer, int f) const;
  void set_column(int n, int layer, int f, std::span<const std::complex<double>> values);

  std::vector<std::complex<double>>& data() { return v_; }
  const std::vector<std::complex<double>>& data() const { return v_; }

  bool same_dims(const CsiSequence& o) const {
    return n_time_ == o.n_time_ && rank_ == o.rank_ && n_tx_ == o.n_tx_ && n_sb_ == o.n_sb_;
  }
  friend bool operator==(const CsiSequence&, const CsiSequence&) = default;

 private:
  std::size_t index(int n, int layer, int t, int f) const {
    return ((static_cast<std::size_t>(n) * rank_ + layer) * n_tx_ + t) * n_sb_ + f;
  }

  int n_time_ = 0, rank_ = 0, n_tx_ = 0, n_sb_ = 0;
  std::vector<std::complex<double>> v_;
};

struct EigenPairs {
  std::vector<double> values;                              // descending
  std::vector<std::vector<std::complex<double>>> vectors;  // unit norm, phase-normalized
};

// Top-`rank` eigenpairs of a Hermitian n x n matrix given row-major.
EigenPairs top_eigenpairs(std::span<const std::complex<double>> hermitian, int n, int rank);

// Scales a column so its largest-magnitude entry is real and non-negative.
void normalize_phase(std::span<std::complex<double>> column);

// Per (time, subband): eigenvectors of sum over the subband's RBs of H^H H.
CsiSequence dominant_eigenvectors(const ChannelRealization& h, int rank, int rb_per_subband);

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
  ChannelConfig config;
  int rank = 1;
  Split split = Split::Train;
  std::vector<CsiSequence> samples;
};

// Sample i uses channel seed derive_seed(config.seed, i). Entries are
// rounded to float32 so a write/read cycle is lossless.
Dataset generate_dataset(const ChannelConfig& config, int rank, std::size_t count, Split split,
                         unsigned threads = 1);

std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

// Mean SGCS between V(n) and V(0) over every sample, layer, subband and n.
double temporal_correlation(const Dataset& d);

// max | ||v|| - 1 | over all columns.
double max_column_norm_error(const Dataset& d);

}  // namespace slate
