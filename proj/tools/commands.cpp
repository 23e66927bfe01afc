#include "commands.hpp"

#include <cerrno>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <system_error>

#include "slate/analysis.hpp"
#include "slate/checkpoint.hpp"
#include "slate/config_json.hpp"
#include "slate/csi.hpp"
#include "slate/errors.hpp"
#include "slate/model.hpp"

namespace slate::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::pair<int, int> parse_window(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      const int side = std::stoi(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return {side, side};
    }
    const std::string hs = text.substr(0, x), ws = text.substr(x + 1);
    const int h = std::stoi(hs, &used);
    if (used != hs.size()) throw std::invalid_argument(text);
    const int w = std::stoi(ws, &used);
    if (used != ws.size()) throw std::invalid_argument(text);
    return {h, w};
  } catch (const std::logic_error&) {
    throw ConfigError("--window expects HxW (e.g. 7x4), got '" + text + "'");
  }
}

std::string shape_text(int n_tx, int n_sb) {
  return std::to_string(n_tx) + " antennas x " + std::to_string(n_sb) + " subbands";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("--split must be 'train' or 'test', got '" + s + "'");
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path() && !fs::exists(p.parent_path())) {
    throw std::system_error(std::make_error_code(std::errc::no_such_file_or_directory),
                            "output directory " + p.parent_path().string() + " does not exist");
  }
}

}  // namespace

ModelConfig ModelFlags::resolve() const {
  ModelConfig c = config;
  if (window) std::tie(c.window_h, c.window_w) = parse_window(*window);
  if (stages) {
    const auto r = static_cast<std::size_t>(*stages);
    if (*stages < 1 || c.down.size() != r || c.up.size() != r || c.depth.size() != r || c.heads.size() != r) {
      throw ConfigError("--stages " + std::to_string(*stages) + " but --down/--up/--depth/--heads have " +
                        std::to_string(c.down.size()) + "/" + std::to_string(c.up.size()) + "/" +
                        std::to_string(c.depth.size()) + "/" + std::to_string(c.heads.size()) + " entries");
    }
  }
  c.validate();
  // Building the model catches constraints that only show up per stage.
  SlateModel<float> probe(c, 0);
  return c;
}

int cmd_gen_data(const GenDataOptions& o, std::uint64_t seed, unsigned threads, RunManifest& manifest,
                 std::ostream& out, std::ostream& err) {
  ChannelConfig ch = o.channel;
  ch.seed = seed;
  ch.validate();
  const Split split = parse_split(o.split);
  if (o.rank < 1 || o.rank > std::min(ch.n_rx, ch.n_tx)) {
    throw ConfigError("--rank must lie in [1, min(nrx, ntx)], got " + std::to_string(o.rank));
  }
  ensure_parent(o.out);

  manifest.config = {{"channel", ch}, {"rank", o.rank}, {"samples", o.samples}, {"split", split_name(split)}};
  manifest.outputs = {{"dataset", o.out}};
  manifest.write();

  if (o.samples == 0) err << "warning: --samples 0 writes an empty dataset\n";
  const Dataset d = generate_dataset(ch, o.rank, o.samples, split, threads);
  write_dataset(d, o.out);

  out << "wrote " << o.out << "\n";
  out << "  sequences (M):   " << d.samples.size() << "\n";
  out << "  time steps (N):  " << ch.n_time << "\n";
  out << "  dims:            rank " << o.rank << " x " << ch.n_tx << " antennas x " << ch.n_sb << " subbands\n";
  out << "  split:           " << split_name(split) << "\n";
  out << "  doppler:         " << ch.max_doppler_hz << " Hz, " << ch.n_paths << " paths\n";
  if (!d.samples.empty()) {
    const double norm_err = max_column_norm_error(d);
    out << "  norm check:      max |‖v‖-1| = " << std::scientific << std::setprecision(2) << norm_err
        << std::defaultfloat << std::setprecision(6) << (norm_err <= 1e-6 ? " (ok)" : " (FAILED)") << "\n";
    out << "  temporal corr.:  " << std::fixed << std::setprecision(6) << temporal_correlation(d)
        << std::defaultfloat << "\n";
    if (norm_err > 1e-6) throw NumericalError("dataset columns are not unit norm");
  }
  manifest.outputs["sequences"] = d.samples.size();
  return kOk;
}

int cmd_train(TrainOptions o, std::uint64_t seed, RunManifest& manifest, std::ostream& out, std::ostream& err) {
  o.train.seed = seed;
  out << "lr=" << o.train.lr << ", batch=" << o.train.batch << ", epochs=" << o.train.epochs << "\n";
  o.train.validate();
  if (o.checkpoint_every < 0) throw ConfigError("--checkpoint-every must be non-negative");

  std::optional<Checkpoint> resume;
  ModelConfig mc;
  if (!o.resume.empty()) {
    resume = read_checkpoint(o.resume);
    mc = resume->model;
    if (o.model.any_set) {
      const ModelConfig asked = o.model.resolve();
      if (json(asked) != json(mc)) {
        throw ConfigError("model flags " + json(asked).dump() + " differ from the resumed checkpoint's " +
                          json(mc).dump());
      }
    }
  } else {
    mc = o.model.resolve();
  }

  const Dataset train_set = read_dataset(o.data);
  std::optional<Dataset> val_set;
  if (!o.val.empty()) val_set = read_dataset(o.val);

  const auto check = [&](const Dataset& d, const std::string& which) {
    if (d.config.n_tx != mc.n_tx || d.config.n_sb != mc.n_sb) {
      throw ConfigError(which + " dataset is " + shape_text(d.config.n_tx, d.config.n_sb) + " but the model is " +
                        shape_text(mc.n_tx, mc.n_sb));
    }
    if (o.rank && d.rank != *o.rank) {
      throw ConfigError(which + " dataset has rank " + std::to_string(d.rank) + " but --rank is " +
                        std::to_string(*o.rank));
    }
  };
  check(train_set, "training");
  if (val_set) {
    check(*val_set, "validation");
    if (val_set->rank != train_set.rank) {
      throw ConfigError("training dataset has rank " + std::to_string(train_set.rank) +
                        " but the validation dataset has rank " + std::to_string(val_set->rank));
    }
  }
  if (train_set.samples.empty()) throw ConfigError("training dataset " + o.data + " is empty");

  const fs::path ckpt_path = o.out;
  const fs::path metrics_path = o.metrics.empty() ? fs::path(o.out + ".metrics.jsonl") : fs::path(o.metrics);
  ensure_parent(ckpt_path);
  ensure_parent(metrics_path);

  SlateModel<float> model(mc, seed);
  Adam<float> optimizer(model.parameters().vars(), o.train.lr);
  int first_epoch = 0;
  if (resume) first_epoch = restore_training_checkpoint(*resume, model, optimizer);

  manifest.config = {{"model", mc}, {"train", o.train}, {"checkpointEvery", o.checkpoint_every}};
  manifest.inputs = {{"data", o.data}};
  if (val_set) manifest.inputs["val"] = o.val;
  if (resume) manifest.inputs["resume"] = o.resume;
  manifest.outputs = {{"checkpoint", o.out}, {"metrics", metrics_path.string()}};
  manifest.write();

  // A resumed run appends to the existing log so step numbers stay monotone.
  std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::system_error(errno, std::generic_category(), "cannot write " + metrics_path.string());

  if (resume) {
    out << "resuming " << o.resume << " after epoch " << first_epoch << ", step " << optimizer.steps() << "\n";
  }
  const json data_meta = {{"channel", train_set.config}, {"rank", train_set.rank}};
  const auto save = [&](int epochs_completed) {
    Checkpoint c = make_training_checkpoint(model, optimizer, o.train, epochs_completed);
    c.meta["data"] = data_meta;
    write_checkpoint(c, ckpt_path);
  };

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    metrics << metrics_line(m) << "\n";
    metrics.flush();
    if (!metrics) throw std::system_error(errno, std::generic_category(), "write failed for " + metrics_path.string());
    out << "epoch " << m.epoch << "  step " << m.step << "  loss " << std::fixed << std::setprecision(6)
        << m.train_loss;
    if (m.val_sgcs) out << "  valSGCS " << *m.val_sgcs;
    out << std::defaultfloat << "\n";
    out.flush();
    if (o.checkpoint_every > 0 && m.epoch % o.checkpoint_every == 0) save(m.epoch);
  };

  const TrainResult result =
      train(model, optimizer, train_set, val_set ? &*val_set : nullptr, o.train, hooks, first_epoch);
  save(result.epochs_completed);

  const Dataset& final_set = val_set && !val_set->samples.empty() ? *val_set : train_set;
  double final_sgcs = 0.0;
  if (!result.history.empty() && result.history.back().val_sgcs) {
    final_sgcs = *result.history.back().val_sgcs;
  } else {
    final_sgcs = mean_hard_sgcs(model, final_set, o.train.batch);
  }
  if (!val_set) err << "note: no --val dataset; reporting SGCS on the training data\n";
  out << "final " << (val_set ? "validation" : "training") << " SGCS: " << std::fixed << std::setprecision(6)
      << final_sgcs << std::defaultfloat << "\n";
  if (result.reached_target) out << "reached target SGCS " << *o.train.target_sgcs << "\n";

  manifest.outputs["epochsCompleted"] = result.epochs_completed;
  manifest.outputs["steps"] = optimizer.steps();
  manifest.outputs["finalSGCS"] = final_sgcs;
  return kOk;
}

int cmd_eval(const EvalOptionsCli& o, unsigned threads, RunManifest& manifest, std::ostream& out,
             std::ostream& err) {
  if (o.batch < 1) throw ConfigError("--batch must be at least 1");
  if (!o.self_test && o.model.empty()) throw ConfigError("--model is required unless --self-test is given");
  if (!o.out.empty()) ensure_parent(o.out);

  manifest.config = {{"selfTest", o.self_test},
                     {"ablateState", o.ablate_state},
                     {"reorthogonalize", o.reorthogonalize},
                     {"batch", o.batch}};
  manifest.inputs = {{"data", o.data}};
  if (!o.self_test) manifest.inputs["model"] = o.model;
  if (!o.out.empty()) manifest.outputs = {{"report", o.out}};

  EvalReport report;
  if (o.self_test) {
    if (o.l_dim < 1) throw ConfigError("--ldim must be positive");
    manifest.config["lDim"] = o.l_dim;
    manifest.write();
    if (o.ablate_state) err << "note: --ablate-state has no effect with --self-test\n";
    const Dataset data = read_dataset(o.data);
    report = evaluate_reconstructor([](const CsiSequence& s) { return s; }, data, o.l_dim, threads);
  } else {
    const Checkpoint c = read_checkpoint(o.model);
    manifest.config["model"] = c.model;
    manifest.write();
    const SlateModel<float> model = model_from_checkpoint<float>(c);
    const Dataset data = read_dataset(o.data);
    EvalOptions opts;
    opts.batch = o.batch;
    opts.ablate_state = o.ablate_state;
    opts.reorthogonalize = o.reorthogonalize;
    opts.threads = threads;
    report = evaluate(model, data, opts);
  }

  out << format_eval_table({report});
  if (report.ablated_mean_sgcs) {
    const PairedComparison pc = paired_comparison(report.per_sequence, report.per_sequence_ablated);
    out << "state benefit: mean " << std::showpos << std::fixed << std::setprecision(6) << pc.mean_difference
        << ", 95% lower bound " << pc.lower_bound << std::noshowpos << std::defaultfloat << " over " << pc.n
        << " sequences\n";
  }
  if (!o.out.empty()) {
    json j = report;
    write_text_atomic(o.out, j.dump(2) + "\n");
    out << "wrote " << o.out << "\n";
  }
  manifest.outputs["meanSGCS"] = report.mean_sgcs;
  return kOk;
}

int cmd_params(const ComplexityOptions& o, std::uint64_t seed, RunManifest& manifest, std::ostream& out,
               std::ostream& err) {
  const ModelConfig mc = o.model.resolve();
  if (o.rank < 1) throw ConfigError("--rank must be at least 1");
  manifest.config = {{"model", mc}, {"rank", o.rank}, {"check", o.check}, {"tolerance", o.tolerance}};
  manifest.write();

  const SlateModel<float> model(mc, seed);
  const ComplexityReport r = complexity_report(model, o.rank);
  if (o.json) {
    out << json(r).dump(2) << "\n";
  } else {
    out << format_complexity_table(r);
  }
  manifest.outputs = {{"analyticTotal", r.analytic_total},
                      {"structuralTotal", r.structural_total},
                      {"reconciliationError", r.reconciliation_error()}};
  if (o.check && !(r.reconciliation_error() <= o.tolerance)) {
    err << "check failed: analytic and structural totals differ by " << 100.0 * r.reconciliation_error()
        << "% (tolerance " << 100.0 * o.tolerance << "%)\n";
    return kNumericalError;
  }
  if (o.check) {
    out << "check passed: reconciliation " << std::fixed << std::setprecision(2) << 100.0 * r.reconciliation_error()
        << "% <= " << 100.0 * o.tolerance << "%" << std::defaultfloat << "\n";
  }
  return kOk;
}

int cmd_flops(const ComplexityOptions& o, RunManifest& manifest, std::ostream& out) {
  const ModelConfig mc = o.model.resolve();
  if (o.rank < 1) throw ConfigError("--rank must be at least 1");
  manifest.config = {{"model", mc}, {"rank", o.rank}};
  manifest.write();

  const FlopEstimate f = flop_estimate(mc, o.rank);
  const std::int64_t bits = payload_overhead(mc.l_dim, o.rank);
  if (o.json) {
    out << json{{"rank", o.rank},
                {"macs", f.macs},
                {"elementwise", f.elementwise},
                {"flopsMac1", f.mac1()},
                {"flopsMac2", f.mac2()},
                {"bits", bits}}
               .dump(2)
        << "\n";
  } else {
    out << std::fixed << std::setprecision(3);
    out << "per CSI report (rank " << o.rank << ")\n";
    out << "  multiply-accumulates:  " << f.macs / 1e6 << " M\n";
    out << "  elementwise ops:       " << f.elementwise / 1e6 << " M\n";
    out << "  FLOPs, MAC = 1 FLOP:   " << f.mac1() / 1e6 << " M\n";
    out << "  FLOPs, MAC = 2 FLOPs:  " << f.mac2() / 1e6 << " M\n";
    out << std::defaultfloat;
    out << "  feedback payload:      " << bits << " bits\n";
  }
  manifest.outputs = {{"flopsMac1", f.mac1()}, {"flopsMac2", f.mac2()}, {"bits", bits}};
  return kOk;
}

}  // namespace slate::cli
