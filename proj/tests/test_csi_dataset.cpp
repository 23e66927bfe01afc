#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "slate/csi.hpp"
#include "slate/sgcs.hpp"

using namespace slate;
using cd = std::complex<double>;

namespace {

ChannelConfig small_config() {
  ChannelConfig c;
  c.seed = 42;
  return c;
}

double column_norm(const std::vector<cd>& v) {
  double s = 0;
  for (auto x : v) s += std::norm(x);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("channel config validation") {
  ChannelConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_rb = 55;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ChannelConfig{};
  c.max_doppler_hz = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ChannelConfig{};
  c.n_paths = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ChannelConfig{}.subband_spacing_hz() == doctest::Approx(4 * 12 * 30e3));
}

TEST_CASE("zero Doppler gives a time-invariant channel") {
  auto c = small_config();
  c.max_doppler_hz = 0.0;
  const auto h = generate_channel(c);
  for (int n = 1; n < c.n_time; ++n) {
    for (int f = 0; f < c.n_rb; ++f) {
      for (int r = 0; r < c.n_rx; ++r) {
        for (int t = 0; t < c.n_tx; ++t) REQUIRE(h.at(n, f, r, t) == h.at(0, f, r, t));
      }
    }
  }
}

TEST_CASE("single path at delay zero is rank one and flat across RBs") {
  auto c = small_config();
  c.n_paths = 1;
  c.delay_spread_s = 0.0;
  const auto h = generate_channel(c);
  for (int f = 1; f < c.n_rb; ++f) CHECK(h.at(3, f, 1, 5) == h.at(3, 0, 1, 5));

  using MatC = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const MatC> hf(&h.at(0, 0, 0, 0), c.n_rx, c.n_tx);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(hf);
  CHECK(svd.singularValues()(1) < 1e-12 * svd.singularValues()(0));

  SUBCASE("eigenvector equals the normalized transmit array response") {
    const auto csi = dominant_eigenvectors(h, 1, c.rb_per_subband);
    // Rows of H are scaled conj(a_tx)^T, so conj(row) is the array response.
    std::vector<cd> response(c.n_tx);
    for (int t = 0; t < c.n_tx; ++t) response[t] = std::conj(h.at(0, 0, 0, t));
    CHECK(column_sgcs(csi.column(0, 0, 0), response) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("generation is deterministic per seed") {
  auto c = small_config();
  CHECK(generate_channel(c).data() == generate_channel(c).data());
  auto d1 = generate_dataset(c, 1, 3, Split::Train);
  auto d2 = generate_dataset(c, 1, 3, Split::Train, 3);
  CHECK(encode_dataset(d1) == encode_dataset(d2));
  c.seed = 43;
  CHECK(generate_channel(c).data() != generate_channel(small_config()).data());
}

TEST_CASE("top eigenpairs") {
  SUBCASE("diagonal Gram") {
    std::vector<cd> g(16, 0.0);
    g[0] = 4.0;
    g[5] = 1.0;
    g[10] = 0.5;
    g[15] = 0.25;
    const auto e = top_eigenpairs(g, 4, 1);
    CHECK(e.values[0] == doctest::Approx(4.0));
    CHECK(e.vectors[0][0] == cd(1.0, 0.0));
    for (int i = 1; i < 4; ++i) CHECK(std::abs(e.vectors[0][i]) < 1e-12);
  }

  SUBCASE("dominant eigenvector maximizes the Rayleigh quotient (Monte-Carlo)") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Eigen::MatrixXcd a(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = cd(nd(rng), nd(rng));
    Eigen::MatrixXcd gram = a.adjoint() * a;
    std::vector<cd> g(16);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) g[i * 4 + j] = gram(i, j);
    const auto e = top_eigenpairs(g, 4, 1);
    Eigen::VectorXcd v(4);
    for (int i = 0; i < 4; ++i) v(i) = e.vectors[0][i];
    const double best = (v.adjoint() * gram * v)(0, 0).real();
    double sampled_max = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
      Eigen::VectorXcd u(4);
      for (int i = 0; i < 4; ++i) u(i) = cd(nd(rng), nd(rng));
      u.normalize();
      sampled_max = std::max(sampled_max, (u.adjoint() * gram * u)(0, 0).real());
    }
    CHECK(best >= sampled_max);
    CHECK(best == doctest::Approx(e.values[0]));
  }

  CHECK_THROWS_AS(top_eigenpairs(std::vector<cd>(4), 2, 3), ConfigError);
}

TEST_CASE("CSI invariants on a generated dataset") {
  auto c = small_config();
  const auto d = generate_dataset(c, 2, 4, Split::Train);
  CHECK(max_column_norm_error(d) < 1e-6);
  for (const auto& s : d.samples) {
    for (int n = 0; n < s.n_time(); ++n) {
      for (int f = 0; f < s.n_sb(); ++f) {
        for (int l = 0; l < 2; ++l) {
          auto col = s.column(n, l, f);
          std::size_t best = 0;
          for (std::size_t i = 1; i < col.size(); ++i)
            if (std::abs(col[i]) > std::abs(col[best])) best = i;
          CHECK(col[best].imag() == 0.0);
          CHECK(col[best].real() >= 0.0);
        }
        cd inner = 0.0;
        for (int t = 0; t < s.n_tx(); ++t) inner += std::conj(s.at(n, 0, t, f)) * s.at(n, 1, t, f);
        CHECK(std::abs(inner) < 1e-6);
      }
    }
  }
}

TEST_CASE("eigenvalues are returned in descending order") {
  auto c = small_config();
  const auto h = generate_channel(c);
  using MatC = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  MatC gram = MatC::Zero(c.n_tx, c.n_tx);
  for (int f = 0; f < 4; ++f) {
    Eigen::Map<const MatC> hf(&h.at(0, f, 0, 0), c.n_rx, c.n_tx);
    gram += hf.adjoint() * hf;
  }
  const auto e = top_eigenpairs({gram.data(), std::size_t(c.n_tx * c.n_tx)}, c.n_tx, 4);
  for (int k = 1; k < 4; ++k) CHECK(e.values[k - 1] >= e.values[k]);
  for (const auto& v : e.vectors) CHECK(column_norm(v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("temporal correlation follows the Doppler knob") {
  auto c = small_config();
  c.max_doppler_hz = 0.0;
  CHECK(temporal_correlation(generate_dataset(c, 1, 8, Split::Train)) == doctest::Approx(1.0).epsilon(1e-6));

  // Statistical: mean correlation over 100 seeds decreases with Doppler.
  double previous = 1.0 + 1e-9;
  for (double doppler : {0.0, 11.1, 50.0, 200.0}) {
    c.max_doppler_hz = doppler;
    const double corr = temporal_correlation(generate_dataset(c, 1, 100, Split::Train));
    CHECK(corr < previous);
    previous = corr;
  }
}

TEST_CASE("dataset file format") {
  auto c = small_config();
  c.n_time = 3;
  const auto d = generate_dataset(c, 2, 3, Split::Test);
  const auto bytes = encode_dataset(d);

  SUBCASE("roundtrip") {
    const auto back = decode_dataset(bytes);
    CHECK(back.samples == d.samples);
    CHECK(back.rank == 2);
    CHECK(back.split == Split::Test);
    CHECK(back.config.seed == c.seed);
    CHECK(back.config.max_doppler_hz == c.max_doppler_hz);
    CHECK(encode_dataset(back) == bytes);
  }

  SUBCASE("file roundtrip") {
    const auto path = std::filesystem::temp_directory_path() / "slate_test_dataset.slte";
    write_dataset(d, path);
    CHECK(read_dataset(path).samples == d.samples);
    std::filesystem::remove(path);
  }

  SUBCASE("corrupted magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_dataset(bad), FormatError);
  }

  SUBCASE("corrupted header field reports its offset") {
    auto bad = bytes;
    bad[16] ^= 0xff;  // n_rb low byte; header block starts at 8
    try {
      decode_dataset(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 8);
    }
    auto bad_tx = bytes;
    bad_tx[8] ^= 0xff;  // consistent header, payload size no longer matches
    CHECK_THROWS_AS(decode_dataset(bad_tx), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_dataset(bad_version), FormatError);
  }

  SUBCASE("truncation") {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 5);
    CHECK_THROWS_AS(decode_dataset(cut), FormatError);
    std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 20);
    CHECK_THROWS_AS(decode_dataset(header_only), FormatError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_dataset(extra), FormatError);
  }

  SUBCASE("empty dataset") {
    const auto empty = generate_dataset(c, 1, 0, Split::Train);
    const auto back = decode_dataset(encode_dataset(empty));
    CHECK(back.samples.empty());
  }
}

TEST_CASE("rank bounds") {
  auto c = small_config();
  CHECK_THROWS_AS(generate_dataset(c, 5, 1, Split::Train), ConfigError);
}
