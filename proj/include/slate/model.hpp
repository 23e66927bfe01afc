#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slate/csi.hpp"
#include "slate/layers.hpp"
#include "slate/model_config.hpp"

namespace slate {

// One (s1, s2) pair per stage. Streams in a batch are independent rows.
template <typename T>
struct RecurrentState {
  std::vector<CellState<T>> stages;
};

// Layer-boundary shapes recorded by encode_step / decode_step.
using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

// Encoder and decoder with shared construction. Each transmission layer is
// an independent stream: inputs are [B, 2, nTx, nSb] with real and
// imaginary parts on axis 1. Parameters are shared by copies of the
// returned Vars, so a model is move-only.
template <typename T>
class SlateModel {
 public:
  SlateModel(const ModelConfig& cfg, std::uint64_t seed);
  SlateModel(const SlateModel&) = delete;
  SlateModel& operator=(const SlateModel&) = delete;
  SlateModel(SlateModel&&) noexcept = default;
  SlateModel& operator=(SlateModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  RecurrentState<T> initial_encoder_state(std::size_t batch) const;
  RecurrentState<T> initial_decoder_state(std::size_t batch) const;

  struct EncodeResult {
    Var<T> latent;  // [B, lDim], entries in (-1, 1)
    RecurrentState<T> state;
  };
  struct DecodeResult {
    Var<T> csi;  // [B, 2, nTx, nSb]
    RecurrentState<T> state;
  };

  EncodeResult encode_step(const Var<T>& csi, const RecurrentState<T>& state, ShapeTrace* trace = nullptr) const;
  DecodeResult decode_step(const Var<T>& latent, const RecurrentState<T>& state, ShapeTrace* trace = nullptr) const;

  const PatchEmbed<T>& embed() const { return embed_; }
  const std::vector<PatchMerge<T>>& merges() const { return merges_; }
  const std::vector<SwinLstmCell<T>>& encoder_cells() const { return enc_cells_; }
  const std::vector<SwinLstmCell<T>>& decoder_cells() const { return dec_cells_; }
  const std::vector<PatchExpand<T>>& expands() const { return expands_; }

 private:
  RecurrentState<T> zero_state(std::size_t batch, bool decoder) const;
  void check_state(const RecurrentState<T>& state, std::size_t batch, bool decoder) const;

  ModelConfig cfg_;
  ParameterSet<T> params_;
  PatchEmbed<T> embed_;
  std::vector<PatchMerge<T>> merges_;
  std::vector<SwinLstmCell<T>> enc_cells_;
  LayerNorm<T> enc_head_norm_;
  Linear<T> enc_head_fc_;
  LayerNorm<T> dec_head_norm_;
  Linear<T> dec_head_fc_;
  std::vector<SwinLstmCell<T>> dec_cells_;
  std::vector<PatchExpand<T>> expands_;
  PatchExtract<T> extract_;
};

// Streams for time step n of each sequence, ordered (sequence, layer):
// [sum of ranks, 2, nTx, nSb].
template <typename T>
Tensor<T> stack_time_step(std::span<const CsiSequence* const> sequences, int n);

// Writes a [sum of ranks, 2, nTx, nSb] reconstruction into time step n.
template <typename T>
void unstack_time_step(const Tensor<T>& streams, std::span<CsiSequence* const> sequences, int n);

// Gram-Schmidt across layers (in layer order) for every (time, subband).
// Throws ConfigError for rank < 2 and DegeneracyError when a layer is
// numerically dependent on the earlier ones.
CsiSequence reorthogonalize(const CsiSequence& v);

}  // namespace slate
