#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slate/checkpoint.hpp"
#include "slate/csi.hpp"
#include "slate/model.hpp"
#include "slate/quantization.hpp"

namespace slate {

struct TrainConfig {
  double lr = 1e-4;
  int batch = 32;
  int epochs = 50;
  std::uint64_t seed = 1;
  // Validation every this many epochs (and always after the last one).
  int eval_every = 1;
  // Stop once validation SGCS reaches this value; disabled when unset.
  std::optional<double> target_sgcs;
  // Also cap the run at this many optimizer steps; disabled when unset.
  std::optional<std::uint64_t> max_steps;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, double lr, AdamConfig cfg = {});

  // Applies one bias-corrected update from the parameters' current grads;
  // parameters without a grad are treated as having a zero grad.
  void step();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  std::vector<Var<T>> params_;
  double lr_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

enum class ForwardMode {
  SteTrain,  // quantize/dequantize forward, identity backward
  HardEval,  // quantize/dequantize, no gradient path through the latent
};

template <typename T>
using LatentTransform = std::function<Var<T>(const Var<T>& latent, int step)>;

struct ForwardOptions {
  ForwardMode mode = ForwardMode::SteTrain;
  // Zero both recurrent states before every step (temporal ablation).
  bool reset_state_each_step = false;
};

template <typename T>
struct SequenceOutput {
  std::vector<Var<T>> reconstructions;  // per step, [B, 2, nTx, nSb]
  std::vector<Var<T>> latents;          // per step, encoder output [B, lDim]
  Var<T> loss;                          // -mean SGCS over steps, streams and subbands
};

// Per-step stacked streams for a batch of sequences of equal length.
template <typename T>
std::vector<Tensor<T>> stack_sequences(std::span<const CsiSequence* const> batch);

// `transform`, when given, replaces the quantizer between encoder and
// decoder.
template <typename T>
SequenceOutput<T> forward_sequence(const SlateModel<T>& model, const std::vector<Tensor<T>>& steps,
                                   const ForwardOptions& options, const LatentTransform<T>* transform = nullptr);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_sgcs;
  double wallclock_s = 0.0;
  std::uint64_t step = 0;
};

std::string metrics_line(const EpochMetrics& m);

struct TrainHooks {
  // Called after every epoch (after validation, if any).
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int epochs_completed = 0;
  bool reached_target = false;
};

// Mean hard-eval SGCS of the model over a dataset, batched in dataset order.
template <typename T>
double mean_hard_sgcs(const SlateModel<T>& model, const Dataset& data, int batch = 32);

// Algorithm-1 training loop. Epoch e shuffles with a generator seeded from
// (seed, e), so a resumed run replays the same batches. `first_epoch`
// continues numbering after a resume. Throws NumericalError (naming the
// epoch, batch and learning rate) when the loss becomes NaN.
template <typename T>
TrainResult train(SlateModel<T>& model, Adam<T>& optimizer, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks = {}, int first_epoch = 0);

// Checkpoint with parameters, Adam moments ("adam.m.<name>", "adam.v.<name>"),
// optimizer step and {"train": TrainConfig, "epoch": completed epochs}.
template <typename T>
Checkpoint make_training_checkpoint(const SlateModel<T>& model, const Adam<T>& optimizer, const TrainConfig& cfg,
                                    int epochs_completed);

// Restores parameters and, when present, optimizer moments and step.
// Returns the number of completed epochs recorded in the checkpoint.
template <typename T>
int restore_training_checkpoint(const Checkpoint& c, SlateModel<T>& model, Adam<T>& optimizer);

}  // namespace slate
