#include "slate/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "slate/errors.hpp"
#include "slate/sgcs.hpp"
#include "slate/training.hpp"

namespace slate {

namespace {

std::int64_t prod(const std::vector<int>& v, std::size_t from, std::size_t to) {
  std::int64_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= v[i];
  return p;
}

std::string layer_key(const std::string& name) {
  const auto first = name.find('.');
  if (first == std::string::npos) return name;
  const auto second = name.find('.', first + 1);
  return second == std::string::npos ? name : name.substr(0, second);
}

}  // namespace

std::vector<AnalyticRow> analytic_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t e = cfg.e_dim, l = cfg.l_dim;
  const std::int64_t ph = cfg.patch_h, pw = cfg.patch_w;
  const std::int64_t area = static_cast<std::int64_t>(cfg.n_tx) * cfg.n_sb;
  const std::size_t stages = static_cast<std::size_t>(cfg.stages());
  std::vector<AnalyticRow> rows;

  rows.push_back({"enc.embed", "(2*Ph*Pw+3)*Edim", (2 * ph * pw + 3) * e});
  for (std::size_t r = 0; r < stages; ++r) {
    const std::int64_t d = cfg.down[r];
    const std::int64_t d_prev = r == 0 ? 1 : cfg.down[r - 1];
    const std::int64_t p = prod(cfg.down, 0, r + 1);
    const std::int64_t a = cfg.depth[r];
    const std::string n = std::to_string(r + 1);
    rows.push_back({"enc.merge" + n, "4*d_r*d_{r-1}^2*Edim^2 + 8*Edim, d_0=1", 4 * d * d_prev * d_prev * e * e + 8 * e});
    rows.push_back({"enc.cell" + n, "14*a_r*(prod d)^2*Edim^2 + 14*a_r*(prod d)*Edim",
                    14 * a * p * p * e * e + 14 * a * p * e});
  }
  const std::int64_t pd = prod(cfg.down, 0, stages);
  rows.push_back({"enc.head", "(2+Ldim)*Ntx*Nsb*Edim/(Ph*Pw*prod d) + Ldim", (2 + l) * area * e / (ph * pw * pd) + l});

  const std::int64_t pu = prod(cfg.up, 0, stages);
  rows.push_back({"dec.head", "(1+Ldim)*Ntx*Nsb*Edim/(Ph*Pw*prod u) + 2*Ldim",
                  (1 + l) * area * e / (ph * pw * pu) + 2 * l});
  for (std::size_t r = 0; r < stages; ++r) {
    const std::int64_t u = prod(cfg.up, r, stages);
    const std::int64_t a = cfg.decoder_depth(static_cast<int>(r));
    const std::string n = std::to_string(r + 1);
    rows.push_back({"dec.cell" + n, "14*a_r*(prod u)^2*Edim^2 + 14*a_r*(prod u)*Edim",
                    14 * a * u * u * e * e + 14 * a * u * e});
    rows.push_back({"dec.expand" + n, "2*(prod u)^2*Edim^2 + (prod u)*Edim", 2 * u * u * e * e + u * e});
  }
  rows.push_back({"dec.extract", "2*(Ph*Pw*Edim+1)", 2 * (ph * pw * e + 1)});
  return rows;
}

template <typename T>
std::vector<StructuralRow> structural_params(const ParameterSet<T>& params) {
  std::vector<StructuralRow> rows;
  for (const auto& p : params.items()) {
    const std::string key = layer_key(p.name);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const StructuralRow& r) { return r.layer == key; });
    if (it == rows.end()) it = rows.insert(rows.end(), StructuralRow{key, 0});
    it->count += static_cast<std::int64_t>(p.var.size());
  }
  return rows;
}

std::int64_t payload_overhead(std::int64_t l_dim, std::int64_t rank) {
  if (l_dim < 0 || rank < 0) throw ConfigError("payload overhead needs non-negative lDim and rank");
  return 2 * l_dim * rank;
}

FlopEstimate flop_estimate(const ModelConfig& cfg, int rank) {
  cfg.validate();
  if (rank < 1) throw ConfigError("rank must be at least 1");
  constexpr double kNorm = 8.0;     // mean, centred square, scale, affine per element
  constexpr double kSoftmax = 5.0;  // max, subtract, exp, sum, divide per score
  FlopEstimate f;
  f.rank = rank;
  const double window = static_cast<double>(cfg.window_h) * cfg.window_w;
  const double hidden_ratio = cfg.mlp_ratio;

  auto swin_block = [&](const GridShape& g, int heads, bool shifted) {
    const double t = g.tokens(), c = g.c;
    f.macs += t * 2 * c * c;                 // fuse
    f.macs += t * c * 3 * c;                 // qkv
    f.macs += 2 * t * window * c;            // q k^T and attention * v
    f.macs += t * c * c;                     // proj
    f.macs += 2 * t * c * hidden_ratio * c;  // fc1, fc2
    const double scores = t * window * heads;
    f.elementwise += 3 * kNorm * t * c;                          // norm1 twice, norm2
    f.elementwise += t * (c + 3 * c + c + hidden_ratio * c + c);  // biases
    f.elementwise += t * c;                                      // query scaling
    f.elementwise += scores * (kSoftmax + 1 + (shifted ? 1 : 0));  // bias table, mask
    f.elementwise += 2 * t * c + hidden_ratio * t * c;           // residuals, activation
  };
  auto cell = [&](const GridShape& g, int depth, int heads) {
    for (int b = 0; b < depth; ++b) {
      const bool odd = b % 2 == 1;
      swin_block(g, heads, odd && (cfg.shift_h(g) != 0 || cfg.shift_w(g) != 0));
    }
    f.elementwise += 6.0 * g.elements();  // sigmoid, two tanh, two products, sum
  };

  const GridShape e = cfg.embed_grid();
  const double patch = 2.0 * cfg.patch_h * cfg.patch_w;
  f.macs += e.tokens() * patch * e.c;
  f.elementwise += e.elements() * (1 + kNorm + 1);

  GridShape prev = e;
  for (int r = 0; r < cfg.stages(); ++r) {
    const GridShape g = cfg.encoder_grid(r);
    const double in = static_cast<double>(prev.c) * cfg.down[r] * cfg.down[r];
    f.elementwise += kNorm * g.tokens() * in;
    f.macs += g.tokens() * in * g.c;
    cell(g, cfg.depth[r], cfg.heads[r]);
    prev = g;
  }
  const double flat = prev.elements(), l = cfg.l_dim;
  f.elementwise += kNorm * flat + 2 * l;  // norm, bias, tanh
  f.macs += flat * l;

  const GridShape d0 = cfg.decoder_grid(0);
  f.elementwise += kNorm * l + d0.elements();
  f.macs += l * d0.elements();
  for (int r = 0; r < cfg.stages(); ++r) {
    const GridShape g = cfg.decoder_grid(r);
    cell(g, cfg.decoder_depth(r), cfg.decoder_heads(r));
    const double u = cfg.up[r];
    f.macs += g.tokens() * static_cast<double>(g.c) * u * g.c;
    f.elementwise += kNorm * g.elements() * u;
  }
  f.elementwise += e.elements();  // output activation
  f.macs += e.tokens() * static_cast<double>(e.c) * patch;
  f.elementwise += 2.0 * cfg.n_tx * cfg.n_sb;

  f.macs *= rank;
  f.elementwise *= rank;
  return f;
}

double ComplexityReport::reconciliation_error() const {
  if (structural_total == 0) return analytic_total == 0 ? 0.0 : INFINITY;
  return std::abs(static_cast<double>(analytic_total - structural_total)) / static_cast<double>(structural_total);
}

ComplexityReport complexity_report(const ModelConfig& cfg, const std::vector<StructuralRow>& structural, int rank) {
  ComplexityReport r;
  for (const auto& a : analytic_params(cfg)) r.rows.push_back({a.layer, a.formula, a.count, 0});
  for (const auto& s : structural) {
    auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const ReconciliationRow& x) { return x.layer == s.layer; });
    if (it == r.rows.end()) {
      r.rows.push_back({s.layer, "", 0, s.count});
    } else {
      it->structural = s.count;
    }
  }
  for (const auto& row : r.rows) {
    r.analytic_total += row.analytic;
    r.structural_total += row.structural;
  }
  r.flops = flop_estimate(cfg, rank);
  r.payload_bits = static_cast<std::int64_t>(cfg.l_dim) * cfg.b_bits * rank;
  return r;
}

template <typename T>
ComplexityReport complexity_report(const SlateModel<T>& model, int rank) {
  return complexity_report(model.config(), structural_params(model.parameters()), rank);
}

std::string format_complexity_table(const ComplexityReport& r) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-48s %10s %10s %8s\n", "layer", "formula", "analytic", "structural",
                "delta");
  out << line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-12s %-48s %10lld %10lld %+8lld\n", row.layer.c_str(), row.formula.c_str(),
                  static_cast<long long>(row.analytic), static_cast<long long>(row.structural),
                  static_cast<long long>(row.delta()));
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %-48s %10lld %10lld %+8lld\n", "total", "",
                static_cast<long long>(r.analytic_total), static_cast<long long>(r.structural_total),
                static_cast<long long>(r.structural_total - r.analytic_total));
  out << line;
  std::snprintf(line, sizeof line, "reconciliation error %.3f%%\n", 100.0 * r.reconciliation_error());
  out << line;
  std::snprintf(line, sizeof line, "FLOPs per CSI report (rank %d): %.2fM (MAC=1), %.2fM (MAC=2)\n", r.flops.rank,
                r.flops.mac1() / 1e6, r.flops.mac2() / 1e6);
  out << line;
  std::snprintf(line, sizeof line, "payload bits: %lld\n", static_cast<long long>(r.payload_bits));
  out << line;
  return out.str();
}

void to_json(nlohmann::json& j, const ComplexityReport& r) {
  j = nlohmann::json::object();
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"layer", row.layer},
                         {"formula", row.formula},
                         {"analytic", row.analytic},
                         {"structural", row.structural},
                         {"delta", row.delta()}});
  }
  j["analyticTotal"] = r.analytic_total;
  j["structuralTotal"] = r.structural_total;
  j["reconciliationError"] = r.reconciliation_error();
  j["rank"] = r.flops.rank;
  j["macs"] = r.flops.macs;
  j["flopsMac1"] = r.flops.mac1();
  j["flopsMac2"] = r.flops.mac2();
  j["bits"] = r.payload_bits;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DimensionError("percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PairedComparison paired_comparison(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired comparison needs equal-length samples");
  if (a.size() < 2) throw DimensionError("paired comparison needs at least two pairs");
  PairedComparison c;
  c.n = a.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
  c.mean_difference = sum / static_cast<double>(c.n);
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - c.mean_difference;
    ss += d * d;
  }
  c.std_error = std::sqrt(ss / static_cast<double>(c.n - 1) / static_cast<double>(c.n));
  c.lower_bound = c.mean_difference - 1.6448536269514722 * c.std_error;
  return c;
}

namespace {

// Runs task(i) for i in [0, count) on up to `threads` workers. Each index
// writes only its own output, so results do not depend on scheduling.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void summarize(EvalReport& r) {
  r.sequences = r.per_sequence.size();
  r.mean_sgcs = std::accumulate(r.per_sequence.begin(), r.per_sequence.end(), 0.0) / static_cast<double>(r.sequences);
  r.p5_sgcs = percentile(r.per_sequence, 5.0);
  if (!r.per_sequence_ablated.empty()) {
    r.ablated_mean_sgcs = std::accumulate(r.per_sequence_ablated.begin(), r.per_sequence_ablated.end(), 0.0) /
                          static_cast<double>(r.sequences);
    r.ablated_p5_sgcs = percentile(r.per_sequence_ablated, 5.0);
  }
}

double score(const CsiSequence& truth, const CsiSequence& rec, bool reorth) {
  return reorth && rec.rank() >= 2 ? sgcs(truth, reorthogonalize(rec)) : sgcs(truth, rec);
}

}  // namespace

template <typename T>
EvalReport evaluate(const SlateModel<T>& model, const Dataset& data, const EvalOptions& options) {
  const ModelConfig& cfg = model.config();
  if (data.config.n_tx != cfg.n_tx || data.config.n_sb != cfg.n_sb) {
    throw ConfigError("dataset has " + std::to_string(data.config.n_tx) + " antennas x " +
                      std::to_string(data.config.n_sb) + " subbands, model expects " + std::to_string(cfg.n_tx) +
                      " x " + std::to_string(cfg.n_sb));
  }
  if (data.samples.empty()) throw ConfigError("evaluation dataset is empty");
  if (options.batch < 1) throw ConfigError("evaluation batch must be at least 1");

  EvalReport r;
  r.l_dim = cfg.l_dim;
  r.rank = data.rank;
  r.bits = static_cast<std::int64_t>(cfg.l_dim) * cfg.b_bits * data.rank;
  r.params = static_cast<std::int64_t>(model.parameters().element_count());
  const FlopEstimate f = flop_estimate(cfg, data.rank);
  r.flops_mac1 = f.mac1();
  r.flops_mac2 = f.mac2();
  r.per_sequence.assign(data.samples.size(), 0.0);
  if (options.ablate_state) r.per_sequence_ablated.assign(data.samples.size(), 0.0);

  const std::size_t per = static_cast<std::size_t>(options.batch);
  const std::size_t chunks = (data.samples.size() + per - 1) / per;
  parallel_for(chunks, options.threads, [&](std::size_t chunk) {
    NoGradGuard guard;
    const std::size_t begin = chunk * per, end = std::min(data.samples.size(), begin + per);
    std::vector<const CsiSequence*> group;
    for (std::size_t i = begin; i < end; ++i) group.push_back(&data.samples[i]);
    const auto steps = stack_sequences<T>(group);
    auto run = [&](bool reset, std::vector<double>& out) {
      const auto seq_out = forward_sequence(model, steps, ForwardOptions{ForwardMode::HardEval, reset});
      std::vector<CsiSequence> rec;
      for (const CsiSequence* s : group) rec.emplace_back(s->n_time(), s->rank(), s->n_tx(), s->n_sb());
      std::vector<CsiSequence*> dst;
      for (auto& s : rec) dst.push_back(&s);
      for (std::size_t n = 0; n < steps.size(); ++n) {
        unstack_time_step(seq_out.reconstructions[n].value(), dst, static_cast<int>(n));
      }
      for (std::size_t i = 0; i < group.size(); ++i) out[begin + i] = score(*group[i], rec[i], options.reorthogonalize);
    };
    run(false, r.per_sequence);
    if (options.ablate_state) run(true, r.per_sequence_ablated);
  });
  summarize(r);
  return r;
}

EvalReport evaluate_reconstructor(const Reconstructor& reconstruct, const Dataset& data, int l_dim, unsigned threads) {
  if (data.samples.empty()) throw ConfigError("evaluation dataset is empty");
  EvalReport r;
  r.l_dim = l_dim;
  r.rank = data.rank;
  r.bits = payload_overhead(l_dim, data.rank);
  r.per_sequence.assign(data.samples.size(), 0.0);
  parallel_for(data.samples.size(), threads, [&](std::size_t i) {
    r.per_sequence[i] = sgcs(data.samples[i], reconstruct(data.samples[i]));
  });
  summarize(r);
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"lDim", r.l_dim},         {"rank", r.rank},       {"bits", r.bits},
                     {"sequences", r.sequences}, {"meanSGCS", r.mean_sgcs}, {"p5SGCS", r.p5_sgcs},
                     {"params", r.params},       {"flopsMac1", r.flops_mac1}, {"flopsMac2", r.flops_mac2}};
  if (r.ablated_mean_sgcs) {
    j["ablatedMeanSGCS"] = *r.ablated_mean_sgcs;
    j["ablatedP5SGCS"] = *r.ablated_p5_sgcs;
  }
}

std::string format_eval_table(const std::vector<EvalReport>& reports) {
  const bool ablated =
      std::any_of(reports.begin(), reports.end(), [](const EvalReport& r) { return r.ablated_mean_sgcs.has_value(); });
  std::ostringstream out;
  char line[256];
  if (ablated) {
    std::snprintf(line, sizeof line, "%6s %6s %10s %10s %12s %10s %10s %10s\n", "lDim", "bits", "meanSGCS", "p5SGCS",
                  "ablatedSGCS", "params", "MFLOPs@1", "MFLOPs@2");
  } else {
    std::snprintf(line, sizeof line, "%6s %6s %10s %10s %10s %10s %10s\n", "lDim", "bits", "meanSGCS", "p5SGCS",
                  "params", "MFLOPs@1", "MFLOPs@2");
  }
  out << line;
  for (const auto& r : reports) {
    if (ablated) {
      std::snprintf(line, sizeof line, "%6d %6lld %10.4f %10.4f %12.4f %10lld %10.2f %10.2f\n", r.l_dim,
                    static_cast<long long>(r.bits), r.mean_sgcs, r.p5_sgcs, r.ablated_mean_sgcs.value_or(NAN),
                    static_cast<long long>(r.params), r.flops_mac1 / 1e6, r.flops_mac2 / 1e6);
    } else {
      std::snprintf(line, sizeof line, "%6d %6lld %10.4f %10.4f %10lld %10.2f %10.2f\n", r.l_dim,
                    static_cast<long long>(r.bits), r.mean_sgcs, r.p5_sgcs, static_cast<long long>(r.params),
                    r.flops_mac1 / 1e6, r.flops_mac2 / 1e6);
    }
    out << line;
  }
  return out.str();
}

template std::vector<StructuralRow> structural_params(const ParameterSet<float>&);
template std::vector<StructuralRow> structural_params(const ParameterSet<double>&);
template ComplexityReport complexity_report(const SlateModel<float>&, int);
template ComplexityReport complexity_report(const SlateModel<double>&, int);
template EvalReport evaluate(const SlateModel<float>&, const Dataset&, const EvalOptions&);
template EvalReport evaluate(const SlateModel<double>&, const Dataset&, const EvalOptions&);

}  // namespace slate
