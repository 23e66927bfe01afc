#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_manifest.hpp"
#include "slate/channel.hpp"
#include "slate/model_config.hpp"
#include "slate/training.hpp"

namespace slate::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kUsageError = 2,
  kNumericalError = 3,
};

struct ModelFlags {
  ModelConfig config;
  std::optional<int> stages;
  std::optional<std::string> window;  // "HxW"
  bool any_set = false;               // true when any model flag was given explicitly

  // Applies --stages and --window and validates. Throws ConfigError.
  ModelConfig resolve() const;
};

struct GenDataOptions {
  std::string out;
  std::size_t samples = 1024;
  ChannelConfig channel;
  int rank = 1;
  std::string split = "train";
};

struct TrainOptions {
  std::string data;
  std::string val;
  std::string out;
  std::string metrics;
  std::string resume;
  ModelFlags model;
  TrainConfig train;
  std::optional<int> rank;
  int checkpoint_every = 0;
};

struct EvalOptionsCli {
  std::string model;
  std::string data;
  std::string out;
  bool ablate_state = false;
  bool self_test = false;
  bool reorthogonalize = false;
  int batch = 32;
  int l_dim = 64;  // only used by --self-test
};

struct ComplexityOptions {
  ModelFlags model;
  int rank = 1;
  bool check = false;
  double tolerance = 0.05;
  bool json = false;
};

// Each command fills `manifest` (config, inputs, outputs), writes it once
// before the work starts, and returns an exit code. Errors propagate as
// exceptions and are mapped to exit codes by the caller.
int cmd_gen_data(const GenDataOptions& o, std::uint64_t seed, unsigned threads, RunManifest& manifest,
                 std::ostream& out, std::ostream& err);
int cmd_train(TrainOptions o, std::uint64_t seed, RunManifest& manifest, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptionsCli& o, unsigned threads, RunManifest& manifest, std::ostream& out,
             std::ostream& err);
int cmd_params(const ComplexityOptions& o, std::uint64_t seed, RunManifest& manifest, std::ostream& out,
               std::ostream& err);
int cmd_flops(const ComplexityOptions& o, RunManifest& manifest, std::ostream& out);

}  // namespace slate::cli
