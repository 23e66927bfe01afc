#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "slate/model_config.hpp"
#include "slate/ops.hpp"

namespace slate {

template <typename T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

// Ordered, named trainable tensors. Insertion order is the canonical
// parameter order (checkpoints, optimizer state, gradient checks).
template <typename T>
class ParameterSet {
 public:
  Var<T> add(std::string name, Tensor<T> init);

  const std::vector<NamedParameter<T>>& items() const { return items_; }
  std::vector<Var<T>> vars() const;
  std::size_t element_count() const;
  // nullptr when absent.
  const NamedParameter<T>* find(std::string_view name) const;
  void zero_grad();

 private:
  std::vector<NamedParameter<T>> items_;
};

// Seeded initializer: linear weights and biases U(-1/sqrt(fan_in), +),
// norms at gamma=1 / beta=0, relative position tables N(0, 0.02) clipped at
// two standard deviations.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  template <typename T> Tensor<T> uniform(Shape shape, double bound);
  template <typename T> Tensor<T> truncated_normal(Shape shape, double stddev);

 private:
  std::mt19937_64 rng_;
};

template <typename T>
struct Linear {
  Var<T> weight;  // [in, out]
  Var<T> bias;    // [out] or undefined

  Linear() = default;
  Linear(ParameterSet<T>& ps, Initializer& init, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias);
  Var<T> operator()(const Var<T>& x) const { return ops::linear(x, weight, bias); }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma;
  Var<T> beta;

  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& ps, const std::string& name, std::size_t dim);
  Var<T> operator()(const Var<T>& x) const { return ops::layer_norm(x, gamma, beta); }
};

// [B, 2, nTx, nSb] -> [B, nSb/pH, nTx/pW, E]: patch projection, norm, LReLU.
template <typename T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParameterSet<T>& ps, Initializer& init, const std::string& name, const ModelConfig& cfg);
  Var<T> operator()(const Var<T>& v) const;

  Linear<T> proj;
  LayerNorm<T> norm;

 private:
  GridShape grid_;
  std::size_t n_tx_ = 0, n_sb_ = 0, patch_features_ = 0;
  T slope_ = 0;
  IndexMapPtr patchify_;
};

// Concatenates d x d neighbourhoods, normalizes, projects to d*C channels.
template <typename T>
class PatchMerge {
 public:
  PatchMerge(ParameterSet<T>& ps, Initializer& init, const std::string& name, GridShape in, int d);
  Var<T> operator()(const Var<T>& x) const;
  GridShape output_grid() const { return out_; }

  LayerNorm<T> norm;
  Linear<T> reduction;

 private:
  GridShape in_, out_;
  int d_;
  IndexMapPtr gather_;
};

// Biasless C -> u*C projection, depth-to-space, norm over C/u.
template <typename T>
class PatchExpand {
 public:
  PatchExpand(ParameterSet<T>& ps, Initializer& init, const std::string& name, GridShape in, int u);
  Var<T> operator()(const Var<T>& x) const;
  GridShape output_grid() const { return out_; }

  Linear<T> expand;
  LayerNorm<T> norm;

 private:
  GridShape in_, out_;
  IndexMapPtr shuffle_;
};

// [B, H, W, E] -> [B, 2, nTx, nSb]: per-token transposed patch projection
// plus one bias per real/imaginary channel.
template <typename T>
class PatchExtract {
 public:
  PatchExtract() = default;
  PatchExtract(ParameterSet<T>& ps, Initializer& init, const std::string& name, const ModelConfig& cfg);
  Var<T> operator()(const Var<T>& x) const;

  Linear<T> proj;
  Var<T> bias;  // [2]

 private:
  std::size_t n_tx_ = 0, n_sb_ = 0;
  IndexMapPtr unpatchify_, bias_expand_;
};

// Pre-norm Swin layer with a side input: the normalized stream and the
// normalized side stream are fused by a 2C -> C projection ahead of
// (shifted) window attention; both residual branches act on the main stream.
template <typename T>
class SwinBlock {
 public:
  SwinBlock(ParameterSet<T>& ps, Initializer& init, const std::string& name, GridShape grid, int heads,
            int window_h, int window_w, int shift_h, int shift_w, int mlp_ratio, T slope);

  // `attention`, when given, receives the softmax weights
  // [B*nWin*heads, N, N].
  Var<T> operator()(const Var<T>& x, const Var<T>& side, Tensor<T>* attention = nullptr) const;

  bool shifted() const { return mask_.defined(); }

  LayerNorm<T> norm1;
  Linear<T> fuse;
  Linear<T> qkv;
  Var<T> relative_bias;  // [(2wh-1)(2ww-1), heads]
  Linear<T> proj;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;

 private:
  GridShape grid_;
  std::size_t heads_, head_dim_, windows_, window_tokens_;
  T scale_, slope_;
  IndexMapPtr q_map_, k_map_, v_map_, merge_map_, bias_map_;
  Var<T> mask_;  // [nWin * heads * N * N] constant, undefined when unshifted
};

template <typename T>
struct CellState {
  Var<T> hidden;  // s1
  Var<T> cell;    // s2
};

// Swin blocks of depth alpha with LSTM-style gating over (s1, s2). Block l
// takes s1 as its side input when l == 0 or l is odd and the cell input x
// when l is even and positive.
template <typename T>
class SwinLstmCell {
 public:
  SwinLstmCell(ParameterSet<T>& ps, Initializer& init, const std::string& name, const ModelConfig& cfg,
               GridShape grid, int depth, int heads);

  // Returns (s1', s2'); the cell output y equals s1'.
  CellState<T> operator()(const Var<T>& x, const CellState<T>& state) const;

  GridShape grid() const { return grid_; }
  const std::vector<SwinBlock<T>>& blocks() const { return blocks_; }

 private:
  GridShape grid_;
  std::vector<SwinBlock<T>> blocks_;
};

}  // namespace slate
