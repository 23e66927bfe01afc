#include "slate/layers.hpp"

#include <cmath>

#include "slate/errors.hpp"
#include "slate/window.hpp"

namespace slate {

template <typename T>
Var<T> ParameterSet<T>::add(std::string name, Tensor<T> init) {
  if (find(name) != nullptr) throw UsageError("duplicate parameter name " + name);
  Var<T> v = Var<T>::parameter(std::move(init));
  items_.push_back({std::move(name), v});
  return v;
}

template <typename T>
std::vector<Var<T>> ParameterSet<T>::vars() const {
  std::vector<Var<T>> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.var);
  return out;
}

template <typename T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.size();
  return n;
}

template <typename T>
const NamedParameter<T>* ParameterSet<T>::find(std::string_view name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

template <typename T>
Tensor<T> Initializer::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng_));
  return t;
}

template <typename T>
Tensor<T> Initializer::truncated_normal(Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) {
    double x;
    do {
      x = dist(rng_);
    } while (std::abs(x) > 2.0 * stddev);
    v = static_cast<T>(x);
  }
  return t;
}

template <typename T>
Linear<T>::Linear(ParameterSet<T>& ps, Initializer& init, const std::string& name, std::size_t in,
                  std::size_t out, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = ps.add(name + ".weight", init.uniform<T>({in, out}, bound));
  if (with_bias) bias = ps.add(name + ".bias", init.uniform<T>({out}, bound));
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterSet<T>& ps, const std::string& name, std::size_t dim) {
  gamma = ps.add(name + ".gamma", Tensor<T>({dim}, T(1)));
  beta = ps.add(name + ".beta", Tensor<T>({dim}, T(0)));
}

namespace {

std::size_t batch_of(const Shape& s, std::size_t per_sample, const char* what) {
  std::size_t n = numel(s);
  if (s.empty() || per_sample == 0 || n % per_sample != 0 || s[0] * per_sample != n) {
    throw DimensionError(std::string(what) + ": unexpected input shape " + to_string(s));
  }
  return s[0];
}

void expect_grid(const Shape& s, const GridShape& g, const char* what) {
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(g.h) || s[2] != static_cast<std::size_t>(g.w) ||
      s[3] != static_cast<std::size_t>(g.c)) {
    throw DimensionError(std::string(what) + ": expected [B, " + std::to_string(g.h) + ", " + std::to_string(g.w) +
                         ", " + std::to_string(g.c) + "], got " + to_string(s));
  }
}

Shape grid_shape(std::size_t b, const GridShape& g) {
  return {b, static_cast<std::size_t>(g.h), static_cast<std::size_t>(g.w), static_cast<std::size_t>(g.c)};
}

}  // namespace

template <typename T>
PatchEmbed<T>::PatchEmbed(ParameterSet<T>& ps, Initializer& init, const std::string& name, const ModelConfig& cfg)
    : grid_(cfg.embed_grid()),
      n_tx_(static_cast<std::size_t>(cfg.n_tx)),
      n_sb_(static_cast<std::size_t>(cfg.n_sb)),
      patch_features_(static_cast<std::size_t>(2 * cfg.patch_h * cfg.patch_w)),
      slope_(static_cast<T>(cfg.lrelu_slope)) {
  proj = Linear<T>(ps, init, name + ".proj", patch_features_, static_cast<std::size_t>(cfg.e_dim), true);
  norm = LayerNorm<T>(ps, name + ".norm", static_cast<std::size_t>(cfg.e_dim));

  const std::size_t ph = static_cast<std::size_t>(cfg.patch_h), pw = static_cast<std::size_t>(cfg.patch_w);
  const std::size_t gh = static_cast<std::size_t>(grid_.h), gw = static_cast<std::size_t>(grid_.w);
  auto m = std::make_shared<IndexMap>();
  m->input_size = 2 * n_tx_ * n_sb_;
  m->index.resize(gh * gw * patch_features_);
  for (std::size_t h = 0; h < gh; ++h) {
    for (std::size_t w = 0; w < gw; ++w) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < ph; ++i) {
          for (std::size_t j = 0; j < pw; ++j) {
            const std::size_t out = (h * gw + w) * patch_features_ + (c * ph + i) * pw + j;
            const std::size_t in = (c * n_tx_ + w * pw + j) * n_sb_ + h * ph + i;
            m->index[out] = static_cast<std::uint32_t>(in);
          }
        }
      }
    }
  }
  patchify_ = m;
}

template <typename T>
Var<T> PatchEmbed<T>::operator()(const Var<T>& v) const {
  const Shape& s = v.shape();
  if (s.size() != 4 || s[1] != 2 || s[2] != n_tx_ || s[3] != n_sb_) {
    throw DimensionError("patch embed: expected [B, 2, " + std::to_string(n_tx_) + ", " + std::to_string(n_sb_) +
                         "], got " + to_string(s));
  }
  Shape ts = grid_shape(s[0], grid_);
  ts[3] = patch_features_;
  Var<T> tokens = ops::gather(v, patchify_, ts);
  return ops::lrelu(norm(proj(tokens)), slope_);
}

template <typename T>
PatchMerge<T>::PatchMerge(ParameterSet<T>& ps, Initializer& init, const std::string& name, GridShape in, int d)
    : in_(in), d_(d) {
  if (d < 1 || in.h % d != 0 || in.w % d != 0) {
    throw ConfigError("patch merge: factor " + std::to_string(d) + " does not divide grid " + to_string(in));
  }
  out_ = {in.h / d, in.w / d, in.c * d};
  const std::size_t cin = static_cast<std::size_t>(in.c);
  const std::size_t cat = static_cast<std::size_t>(d * d) * cin;
  norm = LayerNorm<T>(ps, name + ".norm", cat);
  reduction = Linear<T>(ps, init, name + ".reduction", cat, static_cast<std::size_t>(out_.c), false);
  if (d > 1) {
    const std::size_t ud = static_cast<std::size_t>(d);
    const std::size_t ho = static_cast<std::size_t>(out_.h), wo = static_cast<std::size_t>(out_.w);
    const std::size_t wi = static_cast<std::size_t>(in.w);
    auto m = std::make_shared<IndexMap>();
    m->input_size = static_cast<std::size_t>(in.elements());
    m->index.resize(m->input_size);
    for (std::size_t h = 0; h < ho; ++h) {
      for (std::size_t w = 0; w < wo; ++w) {
        for (std::size_t dj = 0; dj < ud; ++dj) {
          for (std::size_t di = 0; di < ud; ++di) {
            const std::size_t k = dj * ud + di;
            for (std::size_t c = 0; c < cin; ++c) {
              const std::size_t out = (h * wo + w) * cat + k * cin + c;
              const std::size_t src = ((h * ud + di) * wi + (w * ud + dj)) * cin + c;
              m->index[out] = static_cast<std::uint32_t>(src);
            }
          }
        }
      }
    }
    gather_ = m;
  }
}

template <typename T>
Var<T> PatchMerge<T>::operator()(const Var<T>& x) const {
  expect_grid(x.shape(), in_, "patch merge");
  Var<T> h = x;
  if (gather_) {
    Shape s = grid_shape(x.shape()[0], out_);
    s[3] = static_cast<std::size_t>(d_ * d_ * in_.c);
    h = ops::gather(x, gather_, s);
  }
  return reduction(norm(h));
}

template <typename T>
PatchExpand<T>::PatchExpand(ParameterSet<T>& ps, Initializer& init, const std::string& name, GridShape in, int u)
    : in_(in) {
  if (u < 1 || in.c % u != 0) {
    throw ConfigError("patch expand: factor " + std::to_string(u) + " does not divide " + std::to_string(in.c) +
                      " channels");
  }
  out_ = {in.h * u, in.w * u, in.c / u};
  const std::size_t cin = static_cast<std::size_t>(in.c);
  const std::size_t wide = cin * static_cast<std::size_t>(u);
  const std::size_t co = static_cast<std::size_t>(out_.c);
  expand = Linear<T>(ps, init, name + ".expand", cin, wide, false);
  norm = LayerNorm<T>(ps, name + ".norm", co);
  if (u > 1) {
    const std::size_t uu = static_cast<std::size_t>(u);
    const std::size_t hi = static_cast<std::size_t>(in.h), wi = static_cast<std::size_t>(in.w);
    const std::size_t wo = static_cast<std::size_t>(out_.w);
    auto m = std::make_shared<IndexMap>();
    m->input_size = hi * wi * wide;
    m->index.resize(m->input_size);
    for (std::size_t h = 0; h < hi; ++h) {
      for (std::size_t w = 0; w < wi; ++w) {
        for (std::size_t i = 0; i < uu; ++i) {
          for (std::size_t j = 0; j < uu; ++j) {
            for (std::size_t c = 0; c < co; ++c) {
              const std::size_t out = ((h * uu + i) * wo + (w * uu + j)) * co + c;
              const std::size_t src = (h * wi + w) * wide + (i * uu + j) * co + c;
              m->index[out] = static_cast<std::uint32_t>(src);
            }
          }
        }
      }
    }
    shuffle_ = m;
  }
}

template <typename T>
Var<T> PatchExpand<T>::operator()(const Var<T>& x) const {
  expect_grid(x.shape(), in_, "patch expand");
  Var<T> h = expand(x);
  if (shuffle_) h = ops::gather(h, shuffle_, grid_shape(x.shape()[0], out_));
  return norm(h);
}

template <typename T>
PatchExtract<T>::PatchExtract(ParameterSet<T>& ps, Initializer& init, const std::string& name,
                              const ModelConfig& cfg)
    : n_tx_(static_cast<std::size_t>(cfg.n_tx)), n_sb_(static_cast<std::size_t>(cfg.n_sb)) {
  const std::size_t ph = static_cast<std::size_t>(cfg.patch_h), pw = static_cast<std::size_t>(cfg.patch_w);
  const std::size_t features = 2 * ph * pw;
  const std::size_t e = static_cast<std::size_t>(cfg.e_dim);
  proj = Linear<T>(ps, init, name + ".proj", e, features, false);
  bias = ps.add(name + ".bias", init.uniform<T>({2}, 1.0 / std::sqrt(static_cast<double>(e))));

  const std::size_t gw = n_tx_ / pw;
  auto m = std::make_shared<IndexMap>();
  m->input_size = (n_sb_ / ph) * gw * features;
  m->index.resize(2 * n_tx_ * n_sb_);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < n_tx_; ++t) {
      for (std::size_t f = 0; f < n_sb_; ++f) {
        const std::size_t token = (f / ph) * gw + t / pw;
        const std::size_t src = token * features + (c * ph + f % ph) * pw + t % pw;
        m->index[(c * n_tx_ + t) * n_sb_ + f] = static_cast<std::uint32_t>(src);
      }
    }
  }
  unpatchify_ = m;

  auto b = std::make_shared<IndexMap>();
  b->input_size = 2;
  b->index.resize(2 * n_tx_ * n_sb_);
  for (std::size_t i = 0; i < b->index.size(); ++i) b->index[i] = static_cast<std::uint32_t>(i / (n_tx_ * n_sb_));
  bias_expand_ = b;
}

template <typename T>
Var<T> PatchExtract<T>::operator()(const Var<T>& x) const {
  Var<T> y = proj(x);
  const std::size_t batch = batch_of(y.shape(), unpatchify_->input_size, "patch extract");
  Var<T> out = ops::gather(y, unpatchify_, {batch, 2, n_tx_, n_sb_});
  return ops::add_tiled(out, ops::gather(bias, bias_expand_, {2, n_tx_, n_sb_}));
}

template <typename T>
SwinBlock<T>::SwinBlock(ParameterSet<T>& ps, Initializer& init, const std::string& name, GridShape grid, int heads,
                        int window_h, int window_w, int shift_h, int shift_w, int mlp_ratio, T slope)
    : grid_(grid), slope_(slope) {
  if (heads < 1 || grid.c % heads != 0) {
    throw ConfigError(std::to_string(heads) + " heads do not divide " + std::to_string(grid.c) + " channels");
  }
  const std::size_t h = static_cast<std::size_t>(grid.h), w = static_cast<std::size_t>(grid.w);
  const std::size_t c = static_cast<std::size_t>(grid.c);
  const std::size_t wh = static_cast<std::size_t>(window_h), ww = static_cast<std::size_t>(window_w);
  windows_ = window_count(h, w, wh, ww);
  window_tokens_ = wh * ww;
  heads_ = static_cast<std::size_t>(heads);
  head_dim_ = c / heads_;
  scale_ = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim_)));
  const std::size_t n = window_tokens_;
  const std::size_t hidden = c * static_cast<std::size_t>(mlp_ratio);

  norm1 = LayerNorm<T>(ps, name + ".norm1", c);
  fuse = Linear<T>(ps, init, name + ".fuse", 2 * c, c, true);
  qkv = Linear<T>(ps, init, name + ".qkv", c, 3 * c, true);
  relative_bias = ps.add(name + ".relative_bias", init.truncated_normal<T>({(2 * wh - 1) * (2 * ww - 1), heads_}, 0.02));
  proj = Linear<T>(ps, init, name + ".proj", c, c, true);
  norm2 = LayerNorm<T>(ps, name + ".norm2", c);
  fc1 = Linear<T>(ps, init, name + ".fc1", c, hidden, true);
  fc2 = Linear<T>(ps, init, name + ".fc2", hidden, c, true);

  const bool shifted = shift_h != 0 || shift_w != 0;
  auto partition = window_partition_map(h, w, 3 * c, wh, ww);
  IndexMapPtr to_windows = partition;
  if (shifted) to_windows = compose(*cyclic_shift_map(h, w, 3 * c, -shift_h, -shift_w), *partition);
  q_map_ = compose(*to_windows, *head_split_map(windows_, n, heads_, head_dim_, 3, 0));
  k_map_ = compose(*to_windows, *head_split_map(windows_, n, heads_, head_dim_, 3, 1));
  v_map_ = compose(*to_windows, *head_split_map(windows_, n, heads_, head_dim_, 3, 2));

  IndexMapPtr back = compose(*head_merge_map(windows_, n, heads_, head_dim_), *window_reverse_map(h, w, c, wh, ww));
  if (shifted) back = compose(*back, *cyclic_shift_map(h, w, c, shift_h, shift_w));
  merge_map_ = back;

  auto bm = std::make_shared<IndexMap>();
  bm->input_size = relative_bias.size();
  bm->index.resize(heads_ * n * n);
  for (std::size_t hd = 0; hd < heads_; ++hd) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const long dy = static_cast<long>(i / ww) - static_cast<long>(j / ww) + static_cast<long>(wh) - 1;
        const long dx = static_cast<long>(i % ww) - static_cast<long>(j % ww) + static_cast<long>(ww) - 1;
        const std::size_t rel = static_cast<std::size_t>(dy) * (2 * ww - 1) + static_cast<std::size_t>(dx);
        bm->index[(hd * n + i) * n + j] = static_cast<std::uint32_t>(rel * heads_ + hd);
      }
    }
  }
  bias_map_ = bm;

  if (shifted) {
    // Region labels on the rolled grid; tokens from different regions were
    // not neighbours before the roll and must not attend to each other.
    auto region = [](std::size_t p, std::size_t extent, std::size_t win, std::size_t shift) -> int {
      if (p < extent - win) return 0;
      if (p < extent - shift) return 1;
      return 2;
    };
    std::vector<int> label(h * w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        label[y * w + x] = region(y, h, wh, static_cast<std::size_t>(shift_h)) * 3 +
                           region(x, w, ww, static_cast<std::size_t>(shift_w));
      }
    }
    Tensor<T> mask({windows_ * heads_ * n * n});
    const std::size_t nwx = w / ww;
    for (std::size_t win = 0; win < windows_; ++win) {
      const std::size_t oy = (win / nwx) * wh, ox = (win % nwx) * ww;
      for (std::size_t i = 0; i < n; ++i) {
        const int li = label[(oy + i / ww) * w + ox + i % ww];
        for (std::size_t j = 0; j < n; ++j) {
          const int lj = label[(oy + j / ww) * w + ox + j % ww];
          const T value = li == lj ? T(0) : T(-1e4);
          for (std::size_t hd = 0; hd < heads_; ++hd) mask[((win * heads_ + hd) * n + i) * n + j] = value;
        }
      }
    }
    mask_ = Var<T>(std::move(mask));
  }
}

template <typename T>
Var<T> SwinBlock<T>::operator()(const Var<T>& x, const Var<T>& side, Tensor<T>* attention) const {
  expect_grid(x.shape(), grid_, "swin block");
  expect_grid(side.shape(), grid_, "swin block side input");
  const std::size_t batch = x.shape()[0];
  const std::size_t n = window_tokens_;
  const std::size_t groups = batch * windows_ * heads_;

  Var<T> h = fuse(ops::concat_lastdim(norm1(x), norm1(side)));
  Var<T> packed = qkv(h);
  Var<T> q = ops::gather(packed, q_map_, {groups, n, head_dim_});
  Var<T> k = ops::gather(packed, k_map_, {groups, n, head_dim_});
  Var<T> v = ops::gather(packed, v_map_, {groups, n, head_dim_});

  Var<T> scores = ops::bmm(ops::scale(q, scale_), k, true);
  scores = ops::add_tiled(scores, ops::gather(relative_bias, bias_map_, {heads_, n, n}));
  if (mask_.defined()) scores = ops::add_tiled(scores, mask_);
  Var<T> weights = ops::softmax_lastdim(scores);
  if (attention != nullptr) *attention = weights.value();

  Var<T> attended = ops::gather(ops::bmm(weights, v), merge_map_, x.shape());
  Var<T> x1 = ops::add(x, proj(attended));
  return ops::add(x1, fc2(ops::lrelu(fc1(norm2(x1)), slope_)));
}

template <typename T>
SwinLstmCell<T>::SwinLstmCell(ParameterSet<T>& ps, Initializer& init, const std::string& name,
                              const ModelConfig& cfg, GridShape grid, int depth, int heads)
    : grid_(grid) {
  const int sh = cfg.shift_h(grid), sw = cfg.shift_w(grid);
  for (int l = 0; l < depth; ++l) {
    const bool odd = l % 2 == 1;
    blocks_.emplace_back(ps, init, name + ".block" + std::to_string(l), grid, heads, cfg.window_h, cfg.window_w,
                         odd ? sh : 0, odd ? sw : 0, cfg.mlp_ratio, static_cast<T>(cfg.lrelu_slope));
  }
}

template <typename T>
CellState<T> SwinLstmCell<T>::operator()(const Var<T>& x, const CellState<T>& state) const {
  expect_grid(x.shape(), grid_, "swinlstm cell");
  if (!state.hidden.defined() || !state.cell.defined() || state.hidden.shape() != x.shape() ||
      state.cell.shape() != x.shape()) {
    throw StateError("swinlstm cell: state shape does not match input " + to_string(x.shape()) +
                     "; reset the recurrent state between sequences");
  }
  Var<T> f = x;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Var<T>& side = (l > 0 && l % 2 == 0) ? x : state.hidden;
    f = blocks_[l](f, side);
  }
  Var<T> gate = ops::sigmoid(f);
  Var<T> cell = ops::add(ops::mul(gate, ops::tanh(f)), state.cell);
  Var<T> hidden = ops::mul(gate, ops::tanh(cell));
  return {hidden, cell};
}

#define SLATE_INSTANTIATE_LAYERS(T)                                              \
  template class ParameterSet<T>;                                               \
  template Tensor<T> Initializer::uniform<T>(Shape, double);                    \
  template Tensor<T> Initializer::truncated_normal<T>(Shape, double);           \
  template struct Linear<T>;                                                    \
  template struct LayerNorm<T>;                                                 \
  template class PatchEmbed<T>;                                                 \
  template class PatchMerge<T>;                                                 \
  template class PatchExpand<T>;                                                \
  template class PatchExtract<T>;                                               \
  template class SwinBlock<T>;                                                  \
  template class SwinLstmCell<T>;

SLATE_INSTANTIATE_LAYERS(float)
SLATE_INSTANTIATE_LAYERS(double)

}  // namespace slate
