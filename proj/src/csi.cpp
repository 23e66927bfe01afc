#include "slate/csi.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "slate/errors.hpp"
#include "slate/sgcs.hpp"

namespace slate {

CsiSequence::CsiSequence(int n_time, int rank, int n_tx, int n_sb)
    : n_time_(n_time), rank_(rank), n_tx_(n_tx), n_sb_(n_sb),
      v_(static_cast<std::size_t>(n_time) * rank * n_tx * n_sb) {}

std::vector<std::complex<double>> CsiSequence::column(int n, int layer, int f) const {
  std::vector<std::complex<double>> c(static_cast<std::size_t>(n_tx_));
  for (int t = 0; t < n_tx_; ++t) c[t] = at(n, layer, t, f);
  return c;
}

void CsiSequence::set_column(int n, int layer, int f, std::span<const std::complex<double>> values) {
  if (values.size() != static_cast<std::size_t>(n_tx_)) {
    throw DimensionError("set_column: expected " + std::to_string(n_tx_) + " entries, got " +
                         std::to_string(values.size()));
  }
  for (int t = 0; t < n_tx_; ++t) at(n, layer, t, f) = values[t];
}

void normalize_phase(std::span<std::complex<double>> column) {
  if (column.empty()) return;
  std::size_t best = 0;
  for (std::size_t i = 1; i < column.size(); ++i) {
    if (std::abs(column[i]) > std::abs(column[best])) best = i;
  }
  const double mag = std::abs(column[best]);
  if (mag == 0.0) return;
  const std::complex<double> rot = std::conj(column[best]) / mag;
  for (auto& c : column) c *= rot;
  column[best] = std::complex<double>(std::abs(column[best]), 0.0);
}

EigenPairs top_eigenpairs(std::span<const std::complex<double>> hermitian, int n, int rank) {
  if (rank < 1 || rank > n) {
    throw ConfigError("rank " + std::to_string(rank) + " out of range for a " + std::to_string(n) + "x" +
                      std::to_string(n) + " Gram matrix");
  }
  using MatC = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const MatC> g(hermitian.data(), n, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(g);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("Hermitian eigen-solver did not converge on a " + std::to_string(n) + "x" +
                         std::to_string(n) + " Gram matrix");
  }
  EigenPairs out;
  for (int k = 0; k < rank; ++k) {
    const int col = n - 1 - k;
    out.values.push_back(solver.eigenvalues()(col));
    std::vector<std::complex<double>> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = solver.eigenvectors()(i, col);
    normalize_phase(v);
    out.vectors.push_back(std::move(v));
  }
  return out;
}

CsiSequence dominant_eigenvectors(const ChannelRealization& h, int rank, int rb_per_subband) {
  const int nt = h.n_tx(), nr = h.n_rx();
  if (rank < 1 || rank > std::min(nr, nt)) {
    throw ConfigError("rank " + std::to_string(rank) + " exceeds min(n_rx, n_tx) = " +
                      std::to_string(std::min(nr, nt)));
  }
  if (rb_per_subband < 1 || h.n_rb() % rb_per_subband != 0) {
    throw ConfigError("n_rb " + std::to_string(h.n_rb()) + " is not a multiple of rb_per_subband " +
                      std::to_string(rb_per_subband));
  }
  const int n_sb = h.n_rb() / rb_per_subband;
  using MatC = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  CsiSequence out(h.n_time(), rank, nt, n_sb);
  MatC gram(nt, nt);
  for (int n = 0; n < h.n_time(); ++n) {
    for (int sb = 0; sb < n_sb; ++sb) {
      gram.setZero();
      for (int f = sb * rb_per_subband; f < (sb + 1) * rb_per_subband; ++f) {
        Eigen::Map<const MatC> hf(&h.at(n, f, 0, 0), nr, nt);
        gram.noalias() += hf.adjoint() * hf;
      }
      try {
        const EigenPairs e = top_eigenpairs({gram.data(), static_cast<std::size_t>(nt) * nt}, nt, rank);
        for (int l = 0; l < rank; ++l) out.set_column(n, l, sb, e.vectors[l]);
      } catch (const NumericalError& err) {
        throw NumericalError(std::string(err.what()) + " (time " + std::to_string(n) + ", subband " +
                             std::to_string(sb) + ")");
      }
    }
  }
  return out;
}

Dataset generate_dataset(const ChannelConfig& config, int rank, std::size_t count, Split split, unsigned threads) {
  config.validate();
  if (rank < 1 || rank > std::min(config.n_rx, config.n_tx)) {
    throw ConfigError("rank " + std::to_string(rank) + " exceeds min(n_rx, n_tx)");
  }
  Dataset d;
  d.config = config;
  d.rank = rank;
  d.split = split;
  d.samples.resize(count);

  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < count; i += step) {
      ChannelConfig c = config;
      c.seed = derive_seed(config.seed, i);
      CsiSequence s = dominant_eigenvectors(generate_channel(c), rank, config.rb_per_subband);
      for (auto& v : s.data()) v = {double(float(v.real())), double(float(v.imag()))};
      d.samples[i] = std::move(s);
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return d;
}

double temporal_correlation(const Dataset& d) {
  double total = 0.0;
  std::size_t terms = 0;
  for (const auto& s : d.samples) {
    for (int l = 0; l < s.rank(); ++l) {
      for (int f = 0; f < s.n_sb(); ++f) {
        const auto ref = s.column(0, l, f);
        for (int n = 0; n < s.n_time(); ++n) {
          total += column_sgcs(ref, s.column(n, l, f));
          ++terms;
        }
      }
    }
  }
  return terms ? total / double(terms) : 1.0;
}

double max_column_norm_error(const Dataset& d) {
  double worst = 0.0;
  for (const auto& s : d.samples) {
    for (int n = 0; n < s.n_time(); ++n) {
      for (int l = 0; l < s.rank(); ++l) {
        for (int f = 0; f < s.n_sb(); ++f) {
          double sq = 0.0;
          for (int t = 0; t < s.n_tx(); ++t) sq += std::norm(s.at(n, l, t, f));
          worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
        }
      }
    }
  }
  return worst;
}

}  // namespace slate
