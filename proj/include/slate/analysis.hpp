#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slate/csi.hpp"
#include "slate/layers.hpp"
#include "slate/model.hpp"
#include "slate/model_config.hpp"

namespace slate {

// One row of the closed-form parameter table. `layer` uses the same keys as
// the structural grouping ("enc.embed", "enc.merge1", "dec.cell2", ...).
struct AnalyticRow {
  std::string layer;
  std::string formula;
  std::int64_t count = 0;
};

std::vector<AnalyticRow> analytic_params(const ModelConfig& cfg);

struct StructuralRow {
  std::string layer;
  std::int64_t count = 0;
};

// Parameter element counts grouped by the first two components of each
// parameter name, in registration order.
template <typename T>
std::vector<StructuralRow> structural_params(const ParameterSet<T>& params);

struct ReconciliationRow {
  std::string layer;
  std::string formula;
  std::int64_t analytic = 0;
  std::int64_t structural = 0;

  std::int64_t delta() const { return structural - analytic; }
};

struct FlopEstimate {
  double macs = 0.0;       // multiply-accumulates in linear layers and attention products
  double elementwise = 0.0;  // norms, softmax, activations, gates, residual adds
  int rank = 1;

  // A multiply-accumulate counted as one FLOP or as two.
  double mac1() const { return macs + elementwise; }
  double mac2() const { return 2.0 * macs + elementwise; }
};

// One encode_step plus one decode_step per transmission layer.
FlopEstimate flop_estimate(const ModelConfig& cfg, int rank = 1);

// Feedback bits per CSI report for 2-bit quantization.
std::int64_t payload_overhead(std::int64_t l_dim, std::int64_t rank);

struct ComplexityReport {
  std::vector<ReconciliationRow> rows;
  std::int64_t analytic_total = 0;
  std::int64_t structural_total = 0;
  FlopEstimate flops;
  std::int64_t payload_bits = 0;

  // |analytic - structural| / structural over the totals.
  double reconciliation_error() const;
};

// Rows present on only one side are kept with a zero count on the other.
ComplexityReport complexity_report(const ModelConfig& cfg, const std::vector<StructuralRow>& structural,
                                   int rank = 1);

template <typename T>
ComplexityReport complexity_report(const SlateModel<T>& model, int rank = 1);

std::string format_complexity_table(const ComplexityReport& r);
void to_json(nlohmann::json& j, const ComplexityReport& r);

// p in [0, 100], linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

struct PairedComparison {
  std::size_t n = 0;
  double mean_difference = 0.0;  // mean(a - b)
  double std_error = 0.0;
  double lower_bound = 0.0;      // one-sided 95% lower confidence bound on the mean difference
};

// Paired one-sided comparison of a over b (normal approximation).
PairedComparison paired_comparison(std::span<const double> a, std::span<const double> b);

struct EvalOptions {
  int batch = 32;
  bool ablate_state = false;
  // Re-orthogonalize reconstructed layers before scoring (rank >= 2).
  bool reorthogonalize = false;
  unsigned threads = 1;
};

struct EvalReport {
  int l_dim = 0;
  int rank = 1;
  std::int64_t bits = 0;
  std::size_t sequences = 0;
  double mean_sgcs = 0.0;
  double p5_sgcs = 0.0;
  std::optional<double> ablated_mean_sgcs;
  std::optional<double> ablated_p5_sgcs;
  std::int64_t params = 0;
  double flops_mac1 = 0.0;
  double flops_mac2 = 0.0;
  std::vector<double> per_sequence;          // mean SGCS of each sequence, dataset order
  std::vector<double> per_sequence_ablated;  // same with state zeroed every step
};

// Hard-eval SGCS of a model over a dataset. Sequences are processed in fixed
// chunks of `batch`, so the report does not depend on the thread count.
template <typename T>
EvalReport evaluate(const SlateModel<T>& model, const Dataset& data, const EvalOptions& options = {});

using Reconstructor = std::function<CsiSequence(const CsiSequence&)>;

// Scores an arbitrary reconstructor, e.g. an identity stub.
EvalReport evaluate_reconstructor(const Reconstructor& reconstruct, const Dataset& data, int l_dim,
                                  unsigned threads = 1);

void to_json(nlohmann::json& j, const EvalReport& r);
std::string format_eval_table(const std::vector<EvalReport>& reports);

}  // namespace slate
