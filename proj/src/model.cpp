#include "slate/model.hpp"

#include <cmath>

#include "slate/errors.hpp"

namespace slate {

namespace {

Shape grid_shape(std::size_t b, const GridShape& g) {
  return {b, static_cast<std::size_t>(g.h), static_cast<std::size_t>(g.w), static_cast<std::size_t>(g.c)};
}

}  // namespace

template <typename T>
SlateModel<T>::SlateModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(seed);
  const int stages = cfg_.stages();

  embed_ = PatchEmbed<T>(params_, init, "enc.embed", cfg_);
  GridShape grid = cfg_.embed_grid();
  for (int r = 0; r < stages; ++r) {
    const std::string idx = std::to_string(r + 1);
    merges_.emplace_back(params_, init, "enc.merge" + idx, grid, cfg_.down[r]);
    grid = merges_.back().output_grid();
    enc_cells_.emplace_back(params_, init, "enc.cell" + idx, cfg_, grid, cfg_.depth[r], cfg_.heads[r]);
  }
  const std::size_t flat = static_cast<std::size_t>(grid.elements());
  const std::size_t latent = static_cast<std::size_t>(cfg_.l_dim);
  enc_head_norm_ = LayerNorm<T>(params_, "enc.head.norm", flat);
  enc_head_fc_ = Linear<T>(params_, init, "enc.head.fc", flat, latent, true);

  const GridShape first = cfg_.decoder_grid(0);
  dec_head_norm_ = LayerNorm<T>(params_, "dec.head.norm", latent);
  dec_head_fc_ = Linear<T>(params_, init, "dec.head.fc", latent, static_cast<std::size_t>(first.elements()), true);
  grid = first;
  for (int r = 0; r < stages; ++r) {
    const std::string idx = std::to_string(r + 1);
    dec_cells_.emplace_back(params_, init, "dec.cell" + idx, cfg_, grid, cfg_.decoder_depth(r),
                            cfg_.decoder_heads(r));
    expands_.emplace_back(params_, init, "dec.expand" + idx, grid, cfg_.up[r]);
    grid = expands_.back().output_grid();
  }
  extract_ = PatchExtract<T>(params_, init, "dec.extract", cfg_);
}

template <typename T>
RecurrentState<T> SlateModel<T>::zero_state(std::size_t batch, bool decoder) const {
  if (batch == 0) throw DimensionError("recurrent state: batch must be positive");
  RecurrentState<T> s;
  const auto& cells = decoder ? dec_cells_ : enc_cells_;
  for (const auto& cell : cells) {
    const Shape shape = grid_shape(batch, cell.grid());
    s.stages.push_back({Var<T>(Tensor<T>(shape)), Var<T>(Tensor<T>(shape))});
  }
  return s;
}

template <typename T>
RecurrentState<T> SlateModel<T>::initial_encoder_state(std::size_t batch) const {
  return zero_state(batch, false);
}

template <typename T>
RecurrentState<T> SlateModel<T>::initial_decoder_state(std::size_t batch) const {
  return zero_state(batch, true);
}

template <typename T>
void SlateModel<T>::check_state(const RecurrentState<T>& state, std::size_t batch, bool decoder) const {
  const auto& cells = decoder ? dec_cells_ : enc_cells_;
  const char* side = decoder ? "decoder" : "encoder";
  if (state.stages.size() != cells.size()) {
    throw StateError(std::string(side) + " state has " + std::to_string(state.stages.size()) + " stages, model has " +
                     std::to_string(cells.size()));
  }
  for (std::size_t r = 0; r < cells.size(); ++r) {
    const Shape want = grid_shape(batch, cells[r].grid());
    const auto& st = state.stages[r];
    if (!st.hidden.defined() || !st.cell.defined() || st.hidden.shape() != want || st.cell.shape() != want) {
      throw StateError(std::string(side) + " state stage " + std::to_string(r + 1) + " does not match " +
                       to_string(want) + "; reset the state between sequences");
    }
  }
}

template <typename T>
typename SlateModel<T>::EncodeResult SlateModel<T>::encode_step(const Var<T>& csi, const RecurrentState<T>& state,
                                                                ShapeTrace* trace) const {
  auto record = [&](const char* name, const Var<T>& v) {
    if (trace != nullptr) trace->emplace_back(name, v.shape());
  };
  record("input", csi);
  Var<T> x = embed_(csi);
  record("patch_embed", x);
  const std::size_t batch = x.shape()[0];
  check_state(state, batch, false);

  EncodeResult out;
  for (std::size_t r = 0; r < enc_cells_.size(); ++r) {
    x = merges_[r](x);
    record(("patch_merge" + std::to_string(r + 1)).c_str(), x);
    CellState<T> next = enc_cells_[r](x, state.stages[r]);
    x = next.hidden;
    record(("swinlstm" + std::to_string(r + 1)).c_str(), x);
    out.state.stages.push_back(std::move(next));
  }
  Var<T> flat = ops::reshape(x, {batch, x.size() / batch});
  record("flatten", flat);
  out.latent = ops::tanh(enc_head_fc_(enc_head_norm_(flat)));
  record("latent", out.latent);
  return out;
}

template <typename T>
typename SlateModel<T>::DecodeResult SlateModel<T>::decode_step(const Var<T>& latent, const RecurrentState<T>& state,
                                                                ShapeTrace* trace) const {
  auto record = [&](const std::string& name, const Var<T>& v) {
    if (trace != nullptr) trace->emplace_back(name, v.shape());
  };
  const Shape& ls = latent.shape();
  if (ls.size() != 2 || ls[1] != static_cast<std::size_t>(cfg_.l_dim)) {
    throw DimensionError("decode_step: expected latent [B, " + std::to_string(cfg_.l_dim) + "], got " + to_string(ls));
  }
  const std::size_t batch = ls[0];
  check_state(state, batch, true);
  record("latent", latent);

  Var<T> x = ops::reshape(dec_head_fc_(dec_head_norm_(latent)), grid_shape(batch, cfg_.decoder_grid(0)));
  record("mlp", x);
  DecodeResult out;
  for (std::size_t r = 0; r < dec_cells_.size(); ++r) {
    CellState<T> next = dec_cells_[r](x, state.stages[r]);
    x = next.hidden;
    record("swinlstm" + std::to_string(r + 1), x);
    out.state.stages.push_back(std::move(next));
    x = expands_[r](x);
    record("patch_expand" + std::to_string(r + 1), x);
  }
  out.csi = extract_(ops::lrelu(x, static_cast<T>(cfg_.lrelu_slope)));
  record("patch_extract", out.csi);
  return out;
}

template <typename T>
Tensor<T> stack_time_step(std::span<const CsiSequence* const> sequences, int n) {
  if (sequences.empty()) throw DimensionError("stack_time_step: no sequences");
  const CsiSequence& first = *sequences.front();
  std::size_t streams = 0;
  for (const CsiSequence* s : sequences) {
    if (s->n_tx() != first.n_tx() || s->n_sb() != first.n_sb()) {
      throw DimensionError("stack_time_step: sequences disagree on antenna/subband counts");
    }
    if (n < 0 || n >= s->n_time()) throw DimensionError("stack_time_step: time index out of range");
    streams += static_cast<std::size_t>(s->rank());
  }
  const std::size_t ntx = static_cast<std::size_t>(first.n_tx()), nsb = static_cast<std::size_t>(first.n_sb());
  Tensor<T> out({streams, 2, ntx, nsb});
  std::size_t b = 0;
  for (const CsiSequence* s : sequences) {
    for (int l = 0; l < s->rank(); ++l, ++b) {
      T* re = out.data() + b * 2 * ntx * nsb;
      T* im = re + ntx * nsb;
      for (std::size_t t = 0; t < ntx; ++t) {
        for (std::size_t f = 0; f < nsb; ++f) {
          const auto v = s->at(n, l, static_cast<int>(t), static_cast<int>(f));
          re[t * nsb + f] = static_cast<T>(v.real());
          im[t * nsb + f] = static_cast<T>(v.imag());
        }
      }
    }
  }
  return out;
}

template <typename T>
void unstack_time_step(const Tensor<T>& streams, std::span<CsiSequence* const> sequences, int n) {
  std::size_t total = 0;
  for (const CsiSequence* s : sequences) total += static_cast<std::size_t>(s->rank());
  if (sequences.empty()) return;
  const std::size_t ntx = static_cast<std::size_t>(sequences.front()->n_tx());
  const std::size_t nsb = static_cast<std::size_t>(sequences.front()->n_sb());
  if (streams.shape() != Shape{total, 2, ntx, nsb}) {
    throw DimensionError("unstack_time_step: got " + to_string(streams.shape()));
  }
  std::size_t b = 0;
  for (CsiSequence* s : sequences) {
    for (int l = 0; l < s->rank(); ++l, ++b) {
      const T* re = streams.data() + b * 2 * ntx * nsb;
      const T* im = re + ntx * nsb;
      for (std::size_t t = 0; t < ntx; ++t) {
        for (std::size_t f = 0; f < nsb; ++f) {
          s->at(n, l, static_cast<int>(t), static_cast<int>(f)) = {static_cast<double>(re[t * nsb + f]),
                                                                   static_cast<double>(im[t * nsb + f])};
        }
      }
    }
  }
}

CsiSequence reorthogonalize(const CsiSequence& v) {
  if (v.rank() < 2) throw ConfigError("reorthogonalize requires rank >= 2, got " + std::to_string(v.rank()));
  CsiSequence out = v;
  const int ntx = v.n_tx();
  auto dot = [](const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& b) {
    std::complex<double> s{0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
  };
  auto norm = [&](const std::vector<std::complex<double>>& a) { return std::sqrt(std::real(dot(a, a))); };
  for (int n = 0; n < v.n_time(); ++n) {
    for (int f = 0; f < v.n_sb(); ++f) {
      std::vector<std::vector<std::complex<double>>> basis;
      for (int l = 0; l < v.rank(); ++l) {
        auto col = v.column(n, l, f);
        const double original = norm(col);
        if (!(original > 0.0) || !std::isfinite(original)) {
          throw DegeneracyError("reorthogonalize: layer " + std::to_string(l) + " has zero norm at time " +
                                std::to_string(n) + ", subband " + std::to_string(f));
        }
        // Two projection passes keep the result orthogonal to working
        // precision even for nearly dependent inputs.
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& q : basis) {
            const auto c = dot(q, col);
            for (int t = 0; t < ntx; ++t) col[t] -= c * q[t];
          }
        }
        const double residual = norm(col);
        if (residual <= 1e-9 * original) {
          throw DegeneracyError("reorthogonalize: layer " + std::to_string(l) +
                                " is linearly dependent on earlier layers at time " + std::to_string(n) +
                                ", subband " + std::to_string(f));
        }
        for (auto& x : col) x /= residual;
        out.set_column(n, l, f, col);
        basis.push_back(std::move(col));
      }
    }
  }
  return out;
}

template class SlateModel<float>;
template class SlateModel<double>;
template Tensor<float> stack_time_step(std::span<const CsiSequence* const>, int);
template Tensor<double> stack_time_step(std::span<const CsiSequence* const>, int);
template void unstack_time_step(const Tensor<float>&, std::span<CsiSequence* const>, int);
template void unstack_time_step(const Tensor<double>&, std::span<CsiSequence* const>, int);

}  // namespace slate
