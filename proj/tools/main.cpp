// slate: dataset generation, training, evaluation and complexity reports.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "run_manifest.hpp"
#include "slate/errors.hpp"

#ifndef SLATE_VERSION
#define SLATE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace slate;
using namespace slate::cli;

namespace {

unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void add_model_flags(CLI::App* cmd, ModelFlags& m, CLI::Option_group*& group) {
  group = cmd->add_option_group("model", "Model architecture");
  auto& c = m.config;
  group->add_option("--ldim", c.l_dim, "Latent dimension per CSI report")->capture_default_str();
  group->add_option("--edim", c.e_dim, "Embedding dimension")->capture_default_str();
  group->add_option("--patch-h", c.patch_h, "Patch height (subbands)")->capture_default_str();
  group->add_option("--patch-w", c.patch_w, "Patch width (antennas)")->capture_default_str();
  group->add_option("--stages", m.stages, "Number of stages; must match the list lengths");
  group->add_option("--down", c.down, "Encoder merge factors per stage")->delimiter(',')->capture_default_str();
  group->add_option("--up", c.up, "Decoder expand factors per stage")->delimiter(',')->capture_default_str();
  group->add_option("--depth", c.depth, "Swin layers per encoder stage")->delimiter(',')->capture_default_str();
  group->add_option("--heads", c.heads, "Attention heads per encoder stage")->delimiter(',')->capture_default_str();
  group->add_option("--window", m.window, "Attention window HxW (default 7x4)");
  group->add_option("--bits", c.b_bits, "Quantizer bits per latent entry")->capture_default_str();
  group->add_option("--mlp-ratio", c.mlp_ratio, "Swin MLP width ratio")->capture_default_str();
  group->add_option("--model-ntx", c.n_tx, "Transmit antennas the model expects")->capture_default_str();
  group->add_option("--model-nsb", c.n_sb, "Subbands the model expects")->capture_default_str();
}

bool group_used(const CLI::Option_group* g) {
  for (const CLI::Option* opt : g->get_options()) {
    if (opt->count() > 0) return true;
  }
  return false;
}

int run(const std::vector<std::string>& args, int depth);

int dispatch(const std::vector<std::string>& args, int depth) {
  CLI::App app{"SLATE: recurrent Swin autoencoder for CSI feedback compression", "slate"};
  app.set_version_flag("--version", SLATE_VERSION);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::uint64_t seed = 1;
  unsigned threads = default_threads();
  std::string manifest_path;
  app.add_option("--seed", seed, "Seed for data generation, initialization and shuffling")
      ->capture_default_str();
  app.add_option("--threads", threads, "Worker thread cap (training always uses one)")
      ->envname("SLATE_THREADS")
      ->check(CLI::PositiveNumber);
  app.add_option("--manifest", manifest_path, "Run manifest path (default derived from the output)");
  // Global options may also follow the subcommand name.
  app.fallthrough();

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic CSI dataset");
  gen_cmd->add_option("--out", gen.out, "Dataset file to write")->required();
  gen_cmd->add_option("--samples", gen.samples, "Number of sequences (M)")->capture_default_str();
  gen_cmd->add_option("--doppler", gen.channel.max_doppler_hz, "Maximum Doppler shift in Hz")
      ->capture_default_str();
  gen_cmd->add_option("--paths", gen.channel.n_paths, "Propagation paths per channel")->capture_default_str();
  gen_cmd->add_option("--ntx", gen.channel.n_tx, "Transmit antennas")->capture_default_str();
  gen_cmd->add_option("--nrx", gen.channel.n_rx, "Receive antennas")->capture_default_str();
  gen_cmd->add_option("--nsb", gen.channel.n_sb, "Subbands")->capture_default_str();
  gen_cmd->add_option("--rb-per-subband", gen.channel.rb_per_subband, "Resource blocks per subband")
      ->capture_default_str();
  gen_cmd->add_option("--ntime", gen.channel.n_time, "CSI reports per sequence (N)")->capture_default_str();
  gen_cmd->add_option("--delay-spread", gen.channel.delay_spread_s, "Mean path delay in seconds")
      ->capture_default_str();
  gen_cmd->add_option("--rank", gen.rank, "Transmission layers per report")->capture_default_str();
  gen_cmd->add_option("--split", gen.split, "Split tag: train or test")->capture_default_str();

  TrainOptions tr;
  tr.train.lr = 1e-4;
  tr.train.batch = 128;
  tr.train.epochs = 650;
  CLI::Option_group* train_model = nullptr;
  auto* train_cmd = app.add_subcommand("train", "Train a model with quantization-aware training");
  train_cmd->add_option("--data", tr.data, "Training dataset")->required();
  train_cmd->add_option("--val", tr.val, "Validation dataset");
  train_cmd->add_option("--out", tr.out, "Checkpoint file to write")->required();
  train_cmd->add_option("--metrics", tr.metrics, "Metrics log (default <out>.metrics.jsonl)");
  train_cmd->add_option("--resume", tr.resume, "Continue from a training checkpoint");
  train_cmd->add_option("--lr", tr.train.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", tr.train.batch, "Sequences per optimizer step")->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs, "Total epochs (including resumed ones)")
      ->capture_default_str();
  train_cmd->add_option("--eval-every", tr.train.eval_every, "Validate every this many epochs")
      ->capture_default_str();
  train_cmd->add_option("--target-sgcs", tr.train.target_sgcs, "Stop once validation SGCS reaches this");
  train_cmd->add_option("--max-steps", tr.train.max_steps, "Stop after this many optimizer steps");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Also checkpoint every N epochs")
      ->capture_default_str();
  train_cmd->add_option("--rank", tr.rank, "Required dataset rank");
  add_model_flags(train_cmd, tr.model, train_model);

  EvalOptionsCli ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--model", ev.model, "Checkpoint to evaluate");
  eval_cmd->add_option("--data", ev.data, "Evaluation dataset")->required();
  eval_cmd->add_option("--out", ev.out, "JSON report to write");
  eval_cmd->add_flag("--ablate-state", ev.ablate_state, "Add a column with recurrent state zeroed each step");
  eval_cmd->add_flag("--self-test", ev.self_test, "Score an identity reconstructor instead of a model");
  eval_cmd->add_flag("--reorthogonalize", ev.reorthogonalize, "Orthonormalize reconstructed layers (rank >= 2)");
  eval_cmd->add_option("--batch", ev.batch, "Sequences per forward pass")->capture_default_str();
  eval_cmd->add_option("--ldim", ev.l_dim, "Latent size reported by --self-test")->capture_default_str();

  ComplexityOptions cp;
  CLI::Option_group* params_model = nullptr;
  auto* params_cmd = app.add_subcommand("params", "Per-layer parameter counts, analytic vs built model");
  add_model_flags(params_cmd, cp.model, params_model);
  params_cmd->add_option("--rank", cp.rank, "Transmission layers")->capture_default_str();
  params_cmd->add_flag("--check", cp.check, "Exit 3 if the totals disagree by more than --tolerance");
  params_cmd->add_option("--tolerance", cp.tolerance, "Relative tolerance for --check")->capture_default_str();
  params_cmd->add_flag("--json", cp.json, "Print JSON instead of a table");

  ComplexityOptions fl;
  CLI::Option_group* flops_model = nullptr;
  auto* flops_cmd = app.add_subcommand("flops", "FLOPs and feedback bits per CSI report");
  add_model_flags(flops_cmd, fl.model, flops_model);
  flops_cmd->add_option("--rank", fl.rank, "Transmission layers")->capture_default_str();
  flops_cmd->add_flag("--json", fl.json, "Print JSON instead of text");

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  replay_cmd->add_option("manifest", replay_path, "Run manifest")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  if (replay_cmd->parsed()) {
    if (depth > 0) throw ConfigError("a replayed manifest cannot itself be a replay");
    const RunManifest recorded = read_manifest(replay_path);
    std::cout << "replaying: slate";
    for (const auto& a : recorded.argv) std::cout << ' ' << a;
    std::cout << std::endl;
    return run(recorded.argv, depth + 1);
  }

  RunManifest manifest;
  manifest.argv = args;
  manifest.version = SLATE_VERSION;
  manifest.seed = seed;
  manifest.threads = threads;
  manifest.started_at = utc_timestamp();
  const auto default_manifest = [&](const std::string& command, const std::string& out) {
    manifest.command = command;
    if (!manifest_path.empty()) {
      manifest.path = manifest_path;
    } else if (!out.empty()) {
      manifest.path = out + ".manifest.json";
    } else {
      manifest.path = "slate-" + command + ".manifest.json";
    }
  };

  int code = kOk;
  std::string error;
  const auto finish = [&] {
    manifest.status = code == kOk ? "succeeded" : "failed";
    manifest.exit_code = code;
    manifest.error = error;
    manifest.finished_at = utc_timestamp();
    try {
      manifest.write();
    } catch (const std::exception& e) {
      std::cerr << "error: cannot write run manifest: " << e.what() << "\n";
      if (code == kOk) code = kIoError;
    }
  };

  try {
    if (gen_cmd->parsed()) {
      default_manifest("gen-data", gen.out);
      code = cmd_gen_data(gen, seed, threads, manifest, std::cout, std::cerr);
    } else if (train_cmd->parsed()) {
      default_manifest("train", tr.out);
      tr.model.any_set = group_used(train_model);
      code = cmd_train(tr, seed, manifest, std::cout, std::cerr);
    } else if (eval_cmd->parsed()) {
      default_manifest("eval", ev.out);
      code = cmd_eval(ev, threads, manifest, std::cout, std::cerr);
    } else if (params_cmd->parsed()) {
      default_manifest("params", "");
      code = cmd_params(cp, seed, manifest, std::cout, std::cerr);
    } else if (flops_cmd->parsed()) {
      default_manifest("flops", "");
      code = cmd_flops(fl, manifest, std::cout);
    }
  } catch (const NumericalError& e) {
    code = kNumericalError;
    error = e.what();
  } catch (const FormatError& e) {
    code = kIoError;
    error = e.what();
  } catch (const std::system_error& e) {
    // Includes std::filesystem::filesystem_error.
    code = kIoError;
    error = e.what();
  } catch (const std::invalid_argument& e) {
    // ConfigError, DimensionError, StateError.
    code = kUsageError;
    error = e.what();
  } catch (const UsageError& e) {
    code = kUsageError;
    error = e.what();
  } catch (const std::exception& e) {
    code = kIoError;
    error = std::string("unexpected failure: ") + e.what();
  }
  if (!error.empty()) std::cerr << "error: " << error << "\n";
  finish();
  return code;
}

int run(const std::vector<std::string>& args, int depth) {
  try {
    return dispatch(args, depth);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::system_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, 0);
}
