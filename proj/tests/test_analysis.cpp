#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "slate/analysis.hpp"
#include "slate/errors.hpp"
#include "slate/quantization.hpp"
#include "slate/training.hpp"
#include "support/mini_config.hpp"

using namespace slate;
using slate::testing::mini_channel;
using slate::testing::mini_config;

namespace {

std::int64_t row(const std::vector<AnalyticRow>& rows, const std::string& layer) {
  for (const auto& r : rows) {
    if (r.layer == layer) return r.count;
  }
  FAIL("missing row " << layer);
  return -1;
}

std::int64_t row(const ComplexityReport& rep, const std::string& layer, bool structural) {
  for (const auto& r : rep.rows) {
    if (r.layer == layer) return structural ? r.structural : r.analytic;
  }
  FAIL("missing row " << layer);
  return -1;
}

// E[|v^H u|^2] for unit v and uniformly random unit u in C^n.
double random_precoder_floor(int n, int draws, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  double total = 0.0;
  for (int k = 0; k < draws; ++k) {
    // The distribution of u is rotation invariant, so v = e_0 suffices.
    double norm = 0.0, first = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = std::norm(std::complex<double>(g(rng), g(rng)));
      norm += p;
      if (i == 0) first = p;
    }
    total += first / norm;
  }
  return total / draws;
}

}  // namespace

TEST_CASE("closed-form parameter rows") {
  const auto rows = analytic_params(ModelConfig{});
  CHECK(row(rows, "enc.embed") == (2 * 1 * 4 + 3) * 32);
  CHECK(row(rows, "enc.cell1") == 14 * 2 * 32 * 32 + 14 * 2 * 32);
  CHECK(row(rows, "enc.cell1") == 29568);
  CHECK(row(rows, "enc.head") == (2 + 64) * 1792 + 64);
  CHECK(row(rows, "enc.head") == 118336);
  CHECK(row(rows, "enc.merge3") == 4 * 2 * 1 * 32 * 32 + 8 * 32);
  CHECK(row(rows, "enc.cell3") == 14 * 2 * 4 * 32 * 32 + 14 * 2 * 2 * 32);
  CHECK(row(rows, "dec.head") == (1 + 64) * 1792 + 2 * 64);
  CHECK(row(rows, "dec.cell1") == 14 * 2 * 4 * 32 * 32 + 14 * 2 * 2 * 32);
  CHECK(row(rows, "dec.expand1") == 2 * 4 * 32 * 32 + 2 * 32);
  CHECK(row(rows, "dec.extract") == 258);
  for (const auto& r : rows) CHECK(!r.formula.empty());
  CHECK(rows.size() == 1 + 2 * 3 + 1 + 1 + 2 * 3 + 1);
}

TEST_CASE("payload overhead") {
  CHECK(payload_overhead(64, 2) == 256);
  CHECK(payload_overhead(16, 1) == 32);
  CHECK(payload_overhead(64, 0) == 0);
  CHECK_THROWS_AS(payload_overhead(-1, 1), ConfigError);
  for (int l : {16, 32, 64, 120, 128}) {
    const std::vector<std::uint32_t> idx(static_cast<std::size_t>(l), 3);
    const PayloadBits bits = pack_indices(idx, 2);
    for (int rank : {1, 2}) {
      CHECK(payload_overhead(l, rank) == 2 * l * rank);
      CHECK(payload_overhead(l, rank) == static_cast<std::int64_t>(bits.bit_length()) * rank);
    }
  }
}

TEST_CASE("reconciliation against the built model") {
  SlateModel<float> m(ModelConfig{}, 3);
  const ComplexityReport rep = complexity_report(m);

  std::int64_t a = 0, s = 0;
  for (const auto& r : rep.rows) {
    a += r.analytic;
    s += r.structural;
  }
  CHECK(a == rep.analytic_total);
  CHECK(s == rep.structural_total);
  CHECK(s == static_cast<std::int64_t>(m.parameters().element_count()));
  CHECK(std::abs(s - 700000) <= 70000);
  CHECK(rep.reconciliation_error() < 0.05);
  CHECK(row(rep, "dec.extract", true) == 2 * (4 * 32) + 2);

  // Cell deltas are exactly the relative-position bias tables.
  const ModelConfig cfg;
  const std::int64_t table = (2 * cfg.window_h - 1) * (2 * cfg.window_w - 1);
  for (int r = 0; r < 3; ++r) {
    const std::string n = std::to_string(r + 1);
    CHECK(row(rep, "enc.cell" + n, true) - row(rep, "enc.cell" + n, false) ==
          table * cfg.heads[static_cast<std::size_t>(r)] * cfg.depth[static_cast<std::size_t>(r)]);
    CHECK(row(rep, "dec.cell" + n, true) - row(rep, "dec.cell" + n, false) ==
          table * cfg.decoder_heads(r) * cfg.decoder_depth(r));
  }
  // Every other mismatch is a unit-factor merge or expand.
  for (const auto& r : rep.rows) {
    if (r.delta() == 0 || r.layer.find(".cell") != std::string::npos) continue;
    const bool merge = r.layer.rfind("enc.merge", 0) == 0;
    const bool expand = r.layer.rfind("dec.expand", 0) == 0;
    CHECK_MESSAGE((merge || expand), "unexpected delta in " << r.layer);
    const int stage = std::stoi(r.layer.substr(merge ? 9 : 10)) - 1;
    CHECK((merge ? cfg.down : cfg.up)[static_cast<std::size_t>(stage)] == 1);
  }

  const std::string table_text = format_complexity_table(rep);
  CHECK(table_text.find("(2*Ph*Pw+3)*Edim") != std::string::npos);
  CHECK(table_text.find("14*a_r*(prod d)^2*Edim^2 + 14*a_r*(prod d)*Edim") != std::string::npos);
  const nlohmann::json j = rep;
  CHECK(j["structuralTotal"] == rep.structural_total);
  CHECK(j["rows"].size() == rep.rows.size());
}

TEST_CASE("lDim only changes the bottleneck rows") {
  ModelConfig small, large;
  small.l_dim = 16;
  large.l_dim = 128;
  const auto a = complexity_report(SlateModel<float>(small, 1));
  const auto b = complexity_report(SlateModel<float>(large, 1));
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const bool head = a.rows[i].layer == "enc.head" || a.rows[i].layer == "dec.head";
    CHECK((a.rows[i].analytic != b.rows[i].analytic) == head);
    CHECK((a.rows[i].structural != b.rows[i].structural) == head);
  }
}

TEST_CASE("doubling eDim roughly quadruples the cells") {
  ModelConfig wide;
  wide.e_dim = 64;
  const auto a = structural_params(SlateModel<float>(ModelConfig{}, 1).parameters());
  const auto b = structural_params(SlateModel<float>(wide, 1).parameters());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].layer.find(".cell") == std::string::npos) continue;
    const double ratio = static_cast<double>(b[i].count) / static_cast<double>(a[i].count);
    CHECK(ratio > 3.8);
    CHECK(ratio < 4.0);
  }
}

TEST_CASE("flop estimate") {
  const FlopEstimate f = flop_estimate(ModelConfig{});
  CHECK(f.mac1() <= 48.5e6);
  CHECK(f.mac2() >= 48.5e6);
  CHECK(f.mac2() - f.mac1() == doctest::Approx(f.macs));

  const FlopEstimate two = flop_estimate(ModelConfig{}, 2);
  CHECK(two.mac1() == doctest::Approx(2 * f.mac1()));

  // Twice the subbands doubles the tokens and, at a fixed window size, the
  // window count at every stage.
  ModelConfig tall;
  tall.n_sb = 28;
  const FlopEstimate t = flop_estimate(tall);
  CHECK(t.macs / f.macs > 1.9);
  CHECK(t.macs / f.macs < 2.1);

  ModelConfig bad;
  bad.window_w = 3;
  CHECK_THROWS_AS(flop_estimate(bad), ConfigError);
}

TEST_CASE("percentile and paired comparison") {
  CHECK(percentile({3.0, 1.0, 2.0, 4.0, 5.0}, 50.0) == 3.0);
  CHECK(percentile({1.0, 2.0}, 5.0) == doctest::Approx(1.05));
  CHECK(percentile({7.0}, 5.0) == 7.0);
  CHECK_THROWS_AS(percentile({}, 5.0), DimensionError);

  const std::vector<double> a{1.0, 2.0, 3.0, 4.0}, b{0.5, 1.5, 2.0, 3.0};
  const PairedComparison c = paired_comparison(a, b);
  // differences 0.5 0.5 1.0 1.0: mean 0.75, sample sd 0.288675, se 0.144338
  CHECK(c.n == 4);
  CHECK(c.mean_difference == doctest::Approx(0.75));
  CHECK(c.std_error == doctest::Approx(0.14433756729740643));
  CHECK(c.lower_bound == doctest::Approx(0.75 - 1.6448536269514722 * 0.14433756729740643));
  CHECK_THROWS_AS(paired_comparison(a, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("evaluation reports") {
  const Dataset d = generate_dataset(mini_channel(41), 1, 7, Split::Test);
  SlateModel<double> m(mini_config(), 6);

  SUBCASE("identity stub scores one") {
    const EvalReport r = evaluate_reconstructor([](const CsiSequence& v) { return v; }, d, 4);
    CHECK(r.mean_sgcs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.p5_sgcs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.bits == 8);
  }

  SUBCASE("matches the training-side hard evaluation and is thread independent") {
    EvalOptions opt;
    opt.batch = 3;
    const EvalReport one = evaluate(m, d, opt);
    opt.threads = 3;
    const EvalReport three = evaluate(m, d, opt);
    CHECK(one.per_sequence == three.per_sequence);
    CHECK(one.mean_sgcs == three.mean_sgcs);
    CHECK(one.mean_sgcs == doctest::Approx(mean_hard_sgcs(m, d, 3)).epsilon(1e-12));
    CHECK(one.sequences == 7);
    CHECK(one.bits == 2 * 4 * 1);
    CHECK(one.params == static_cast<std::int64_t>(m.parameters().element_count()));
    CHECK(!one.ablated_mean_sgcs.has_value());
    CHECK(one.p5_sgcs <= one.mean_sgcs);
    const nlohmann::json j = one;
    CHECK(j["bits"] == 8);
    CHECK(!j.contains("ablatedMeanSGCS"));
  }

  SUBCASE("state ablation adds a second column") {
    EvalOptions opt;
    opt.ablate_state = true;
    const EvalReport r = evaluate(m, d, opt);
    REQUIRE(r.ablated_mean_sgcs.has_value());
    CHECK(r.per_sequence_ablated.size() == 7);
    // The first step is identical in both modes, the rest differ.
    CHECK(*r.ablated_mean_sgcs != r.mean_sgcs);
    const std::string table = format_eval_table({r});
    CHECK(table.find("ablatedSGCS") != std::string::npos);
  }

  SUBCASE("dimension mismatch") {
    SlateModel<double> big(ModelConfig{}, 1);
    CHECK_THROWS_AS(evaluate(big, d), ConfigError);
  }
}

TEST_CASE("untrained model sits at the random-precoder floor") {
  std::mt19937_64 rng(2024);
  const double floor = random_precoder_floor(32, 200000, rng);
  CHECK(floor == doctest::Approx(1.0 / 32).epsilon(0.02));

  ChannelConfig ch;
  ch.seed = 77;
  const Dataset d = generate_dataset(ch, 1, 32, Split::Test);
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SlateModel<float> m(ModelConfig{}, seed);
    mean += evaluate(m, d).mean_sgcs / 4.0;
  }
  MESSAGE("untrained mean SGCS " << mean << ", Monte-Carlo floor " << floor);
  CHECK(std::abs(mean - floor) < 0.01);
}
