#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <limits>
#include <random>

#include "slate/checkpoint.hpp"
#include "slate/errors.hpp"
#include "slate/model.hpp"
#include "slate/quantization.hpp"
#include "slate/sgcs.hpp"
#include "support/gradcheck.hpp"
#include "support/mini_config.hpp"
#include "support/random_tensor.hpp"

using namespace slate;
using slate::testing::mini_config;
using slate::testing::random_tensor;
using Td = Tensor<double>;
using V = Var<double>;

namespace {

std::size_t count_params(const ParameterSet<double>& ps, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& p : ps.items()) {
    if (p.name.rfind(prefix, 0) == 0) n += p.var.size();
  }
  return n;
}

// Plain-loop reference for one block, written against the mathematical
// definition: tokens are rolled by (-sy, -sx), attention runs inside
// wh x ww windows of the rolled grid, and two tokens may only attend to each
// other when their rolled displacement equals their original displacement
// (i.e. no wrap-around separates them).
Td reference_block(const SwinBlock<double>& b, const Td& x, const Td& side, int heads, int wh, int ww, int sy,
                   int sx) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t hd = C / static_cast<std::size_t>(heads);
  auto ln = [](const double* v, std::size_t n, const Td& g, const Td& be, double* out) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mu += v[i];
    mu /= n;
    for (std::size_t i = 0; i < n; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= n;
    for (std::size_t i = 0; i < n; ++i) out[i] = (v[i] - mu) / std::sqrt(var + 1e-5) * g[i] + be[i];
  };
  auto affine = [](const double* v, std::size_t in, const Td& w, const Td* bias, std::size_t out, double* y) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += v[i] * w[i * out + o];
      y[o] = s;
    }
  };
  auto lrelu = [](double v) { return v > 0 ? v : 0.01 * v; };

  Td out(x.shape());
  const std::size_t T = H * W;
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* xb = x.data() + bi * T * C;
    const double* sb = side.data() + bi * T * C;
    std::vector<double> qkv(T * 3 * C);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> cat(2 * C), h(C);
      ln(xb + t * C, C, b.norm1.gamma.value(), b.norm1.beta.value(), cat.data());
      ln(sb + t * C, C, b.norm1.gamma.value(), b.norm1.beta.value(), cat.data() + C);
      affine(cat.data(), 2 * C, b.fuse.weight.value(), &b.fuse.bias.value(), C, h.data());
      affine(h.data(), C, b.qkv.weight.value(), &b.qkv.bias.value(), 3 * C, qkv.data() + t * 3 * C);
    }
    // Original coordinates of the token at rolled position (ry, rx).
    auto orig = [&](long ry, long rx) {
      return std::pair<long, long>{(ry + sy) % static_cast<long>(H), (rx + sx) % static_cast<long>(W)};
    };
    std::vector<double> attended(T * C, 0.0);
    for (long ry = 0; ry < static_cast<long>(H); ++ry) {
      for (long rx = 0; rx < static_cast<long>(W); ++rx) {
        const auto [oy, ox] = orig(ry, rx);
        const std::size_t qt = static_cast<std::size_t>(oy) * W + static_cast<std::size_t>(ox);
        const long wy0 = (ry / wh) * wh, wx0 = (rx / ww) * ww;
        for (int head = 0; head < heads; ++head) {
          std::vector<double> score;
          std::vector<std::size_t> keys;
          for (long ky = wy0; ky < wy0 + wh; ++ky) {
            for (long kx = wx0; kx < wx0 + ww; ++kx) {
              const auto [koy, kox] = orig(ky, kx);
              if (koy - oy != ky - ry || kox - ox != kx - rx) continue;
              const std::size_t kt = static_cast<std::size_t>(koy) * W + static_cast<std::size_t>(kox);
              double s = 0;
              for (std::size_t d = 0; d < hd; ++d) {
                s += qkv[qt * 3 * C + head * hd + d] * qkv[kt * 3 * C + C + head * hd + d];
              }
              s /= std::sqrt(static_cast<double>(hd));
              const long rel = ((ry - wy0) - (ky - wy0) + wh - 1) * (2 * ww - 1) + ((rx - wx0) - (kx - wx0) + ww - 1);
              s += b.relative_bias.value()[static_cast<std::size_t>(rel) * heads + head];
              score.push_back(s);
              keys.push_back(kt);
            }
          }
          double mx = -std::numeric_limits<double>::infinity(), total = 0;
          for (double s : score) mx = std::max(mx, s);
          for (double& s : score) total += (s = std::exp(s - mx));
          for (std::size_t k = 0; k < keys.size(); ++k) {
            for (std::size_t d = 0; d < hd; ++d) {
              attended[qt * C + head * hd + d] += score[k] / total * qkv[keys[k] * 3 * C + 2 * C + head * hd + d];
            }
          }
        }
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> p(C), x1(C), n2(C), hid(b.fc1.weight.shape()[1]), m(C);
      affine(attended.data() + t * C, C, b.proj.weight.value(), &b.proj.bias.value(), C, p.data());
      for (std::size_t c = 0; c < C; ++c) x1[c] = xb[t * C + c] + p[c];
      ln(x1.data(), C, b.norm2.gamma.value(), b.norm2.beta.value(), n2.data());
      affine(n2.data(), C, b.fc1.weight.value(), &b.fc1.bias.value(), hid.size(), hid.data());
      for (auto& v : hid) v = lrelu(v);
      affine(hid.data(), hid.size(), b.fc2.weight.value(), &b.fc2.bias.value(), C, m.data());
      for (std::size_t c = 0; c < C; ++c) out.data()[bi * T * C + t * C + c] = x1[c] + m[c];
    }
  }
  return out;
}

double max_abs_diff(const Td& a, const Td& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Perturb LayerNorm affine terms so the reference check exercises them.
void jitter(ParameterSet<double>& ps, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.1);
  for (auto& p : ps.items()) {
    V v = p.var;
    for (auto& x : v.mutable_value().values()) x += d(rng);
  }
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [](auto mutate) {
    ModelConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](ModelConfig& c) { c.window_w = 3; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](ModelConfig& c) { c.patch_h = 3; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](ModelConfig& c) { c.heads = {3, 4, 8}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](ModelConfig& c) { c.depth = {2, 3, 2}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](ModelConfig& c) { c.up = {2, 1}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](ModelConfig& c) { c.down = {1, 1, 3}; }).validate(), ConfigError);
  CHECK_THROWS_AS(SlateModel<float>(bad([](ModelConfig& c) { c.window_h = 5; }), 1), ConfigError);
  CHECK(ok.shift_h(ok.encoder_grid(0)) == 3);
  CHECK(ok.shift_w(ok.encoder_grid(0)) == 2);
  CHECK(ok.shift_h(ok.encoder_grid(2)) == 0);
  CHECK(ok.shift_w(ok.encoder_grid(2)) == 0);
}

TEST_CASE("shape chain for the default configuration") {
  SlateModel<double> m(ModelConfig{}, 1);
  ShapeTrace enc, dec;
  auto e = m.encode_step(V(Td({1, 2, 32, 14})), m.initial_encoder_state(1), &enc);
  m.decode_step(e.latent, m.initial_decoder_state(1), &dec);
  const ShapeTrace want_enc = {
      {"input", {1, 2, 32, 14}},  {"patch_embed", {1, 14, 8, 32}}, {"patch_merge1", {1, 14, 8, 32}},
      {"swinlstm1", {1, 14, 8, 32}}, {"patch_merge2", {1, 14, 8, 32}}, {"swinlstm2", {1, 14, 8, 32}},
      {"patch_merge3", {1, 7, 4, 64}}, {"swinlstm3", {1, 7, 4, 64}},   {"flatten", {1, 1792}},
      {"latent", {1, 64}}};
  const ShapeTrace want_dec = {
      {"latent", {1, 64}},           {"mlp", {1, 7, 4, 64}},           {"swinlstm1", {1, 7, 4, 64}},
      {"patch_expand1", {1, 14, 8, 32}}, {"swinlstm2", {1, 14, 8, 32}}, {"patch_expand2", {1, 14, 8, 32}},
      {"swinlstm3", {1, 14, 8, 32}}, {"patch_expand3", {1, 14, 8, 32}}, {"patch_extract", {1, 2, 32, 14}}};
  CHECK(enc == want_enc);
  CHECK(dec == want_dec);
}

TEST_CASE("structural parameter counts") {
  SlateModel<double> m(ModelConfig{}, 1);
  const auto& ps = m.parameters();
  CHECK(count_params(ps, "enc.embed.") == 352);
  CHECK(count_params(ps, "enc.merge3.") == 8 * 32 * 32 + 4 * 32 * 2);
  CHECK(count_params(ps, "enc.merge1.") == 32 * 32 + 2 * 32);
  CHECK(count_params(ps, "dec.extract.") == 258);
  CHECK(count_params(ps, "enc.head.") == 118336);
  CHECK(count_params(ps, "dec.head.") == 116608);
  CHECK(count_params(ps, "dec.expand1.") == 64 * 128 + 64);
  // Cell: 14 C^2 + 14 C per block plus one relative bias table per block.
  const std::size_t table = 13 * 7;
  CHECK(count_params(ps, "enc.cell1.") == 2 * (14 * 32 * 32 + 14 * 32 + table * 2));
  CHECK(count_params(ps, "enc.cell3.") == 2 * (14 * 64 * 64 + 14 * 64 + table * 8));
  const double total = static_cast<double>(ps.element_count());
  CHECK(std::abs(total - 0.7e6) / 0.7e6 < 0.10);

  ModelConfig small;
  small.l_dim = 16;
  SlateModel<double> m16(small, 1);
  CHECK(ps.element_count() - m16.parameters().element_count() == (1792 + 1) * 48 + (1792 + 2) * 48);
}

TEST_CASE("patch embedding and extraction layout") {
  ModelConfig cfg;
  ParameterSet<double> ps;
  Initializer init(3);
  PatchEmbed<double> embed(ps, init, "e", cfg);
  CHECK(ps.element_count() == 352);
  for (auto& v : embed.proj.bias.mutable_value().values()) v = 0;
  V zero = embed(V(Td({2, 2, 32, 14})));
  for (double v : zero.value().values()) CHECK(v == 0.0);
  CHECK(zero.shape() == Shape{2, 14, 8, 32});

  // Extraction with an identity-like projection inverts the patch layout:
  // token (h, w) feature (c, i, j) lands at [c, w*pW + j, h*pH + i].
  ModelConfig one = cfg;
  one.e_dim = 8;
  ParameterSet<double> ps2;
  PatchExtract<double> extract(ps2, init, "x", one);
  CHECK(ps2.element_count() == 2 * (4 * 8 + 1));
  auto& w = extract.proj.weight.mutable_value();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i / 8 == i % 8) ? 1.0 : 0.0;
  extract.bias.mutable_value() = Td({2}, std::vector<double>{0.5, -0.5});
  Td tokens({1, 14, 8, 8});
  for (std::size_t h = 0; h < 14; ++h)
    for (std::size_t ww = 0; ww < 8; ++ww)
      for (std::size_t f = 0; f < 8; ++f) tokens[(h * 8 + ww) * 8 + f] = double(h * 1000 + ww * 10 + f);
  Td out = extract(V(tokens)).value();
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 32; ++t)
      for (std::size_t f = 0; f < 14; ++f) {
        const double want = double(f * 1000 + (t / 4) * 10 + c * 4 + t % 4) + (c == 0 ? 0.5 : -0.5);
        CHECK(out[(c * 32 + t) * 14 + f] == want);
      }
}

TEST_CASE("patch merge and expand") {
  ParameterSet<double> ps;
  Initializer init(4);
  PatchMerge<double> keep(ps, init, "m1", {14, 8, 32}, 1);
  CHECK(keep.output_grid() == GridShape{14, 8, 32});
  PatchMerge<double> merge(ps, init, "m2", {14, 8, 32}, 2);
  CHECK(merge.output_grid() == GridShape{7, 4, 64});
  std::mt19937_64 rng(1);
  V x(random_tensor<double>({2, 14, 8, 32}, rng));
  CHECK(merge(x).shape() == Shape{2, 7, 4, 64});
  CHECK_THROWS_AS(PatchMerge<double>(ps, init, "m3", {7, 4, 64}, 2), ConfigError);

  PatchExpand<double> expand(ps, init, "u2", {7, 4, 64}, 2);
  CHECK(expand.output_grid() == GridShape{14, 8, 32});
  CHECK(expand(V(random_tensor<double>({2, 7, 4, 64}, rng))).shape() == Shape{2, 14, 8, 32});
  PatchExpand<double> same(ps, init, "u1", {14, 8, 32}, 1);
  CHECK(same.output_grid() == GridShape{14, 8, 32});
  CHECK_THROWS_AS(PatchExpand<double>(ps, init, "u3", {7, 4, 63}, 2), ConfigError);

  // A grid whose channels all carry the same value, pushed through an
  // all-ones projection, is spatially constant after depth-to-space.
  for (auto& v : expand.expand.weight.mutable_value().values()) v = 1.0;
  Td in({1, 7, 4, 64}, 0.25);
  Td out = expand(V(in)).value();
  for (double v : out.values()) CHECK(v == doctest::Approx(out[0]).epsilon(1e-12));

  // Depth-to-space placement: out[h*2+i, w*2+j, c] = in[h, w, (i*2+j)*32 + c].
  for (auto& v : expand.expand.weight.mutable_value().values()) v = 0.0;
  auto& ew = expand.expand.weight.mutable_value();
  for (std::size_t i = 0; i < 64; ++i) ew[i * 128 + i] = 1.0;  // first 64 of 128 outputs copy the input
  Td ramp({1, 7, 4, 64});
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = double(i % 64 + 1);
  // Normalization would rescale the tokens; probe the raw rearrangement via
  // the gather by comparing to an explicit placement after the same norm.
  Td shuffled = expand(V(ramp)).value();
  for (std::size_t h = 0; h < 7; ++h)
    for (std::size_t w = 0; w < 4; ++w) {
      // Sub-positions (0,0) and (0,1) receive input channels [0,32) and [32,64);
      // sub-positions (1,*) receive zeros and normalize to beta = 0.
      for (std::size_t c = 0; c < 32; ++c) {
        CHECK(shuffled[((h * 2 + 1) * 8 + w * 2) * 32 + c] == 0.0);
        CHECK(shuffled[((h * 2 + 1) * 8 + w * 2 + 1) * 32 + c] == 0.0);
      }
      const double* a = &shuffled[((h * 2) * 8 + w * 2) * 32];
      const double* b = &shuffled[((h * 2) * 8 + w * 2 + 1) * 32];
      for (std::size_t c = 0; c < 32; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-12));
      CHECK(a[31] > a[0]);
    }
}

TEST_CASE("swin block matches a direct loop implementation") {
  std::mt19937_64 rng(21);
  struct Case {
    GridShape grid;
    int heads, wh, ww, sy, sx;
  };
  for (const Case& c : {Case{{14, 8, 32}, 2, 7, 4, 0, 0}, Case{{14, 8, 32}, 2, 7, 4, 3, 2},
                        Case{{7, 4, 64}, 8, 7, 4, 0, 0}, Case{{4, 4, 8}, 2, 2, 2, 1, 1},
                        Case{{4, 8, 8}, 4, 4, 4, 0, 2}}) {
    ParameterSet<double> ps;
    Initializer init(static_cast<std::uint64_t>(c.grid.h * 100 + c.sy));
    SwinBlock<double> block(ps, init, "b", c.grid, c.heads, c.wh, c.ww, c.sy, c.sx, 4, 0.01);
    jitter(ps, rng);
    CHECK(block.shifted() == (c.sy != 0 || c.sx != 0));
    const Shape s{2, std::size_t(c.grid.h), std::size_t(c.grid.w), std::size_t(c.grid.c)};
    Td x = random_tensor<double>(s, rng), side = random_tensor<double>(s, rng);
    Tensor<double> weights;
    Td got = block(V(x), V(side), &weights).value();
    Td want = reference_block(block, x, side, c.heads, c.wh, c.ww, c.sy, c.sx);
    CHECK(max_abs_diff(got, want) < 1e-10);

    const std::size_t n = std::size_t(c.wh * c.ww);
    for (std::size_t r = 0; r < weights.size() / n; ++r) {
      double total = 0;
      for (std::size_t k = 0; k < n; ++k) total += weights[r * n + k];
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("swin block with zeroed output projections is the identity") {
  ParameterSet<double> ps;
  Initializer init(5);
  SwinBlock<double> block(ps, init, "b", {14, 8, 32}, 2, 7, 4, 3, 2, 4, 0.01);
  for (V v : {block.proj.weight, block.proj.bias, block.fc2.weight, block.fc2.bias}) {
    for (auto& e : v.mutable_value().values()) e = 0.0;
  }
  std::mt19937_64 rng(2);
  Td x = random_tensor<double>({3, 14, 8, 32}, rng);
  CHECK(block(V(x), V(random_tensor<double>({3, 14, 8, 32}, rng))).value() == x);
}

TEST_CASE("swinlstm cell gating and state contract") {
  ModelConfig cfg;
  ParameterSet<double> ps;
  Initializer init(8);
  SwinLstmCell<double> cell(ps, init, "c", cfg, {14, 8, 32}, 2, 2);
  std::mt19937_64 rng(4);
  const Shape s{2, 14, 8, 32};
  V x(random_tensor<double>(s, rng));
  CellState<double> zero{V(Td(s)), V(Td(s))};
  CellState<double> next = cell(x, zero);
  CHECK(next.hidden.shape() == s);
  CHECK(next.cell.shape() == s);

  // Recompute the gate from the block stack directly.
  V f = cell.blocks()[1](cell.blocks()[0](x, zero.hidden), zero.hidden);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double F = f.value()[i];
    const double g = 1.0 / (1.0 + std::exp(-F));
    const double s2 = g * std::tanh(F);
    CHECK(next.cell.value()[i] == doctest::Approx(s2).epsilon(1e-12));
    CHECK(next.hidden.value()[i] == doctest::Approx(g * std::tanh(s2)).epsilon(1e-12));
  }

  CellState<double> again = cell(x, next);
  CHECK(max_abs_diff(again.hidden.value(), next.hidden.value()) > 1e-6);

  CellState<double> wrong{V(Td({2, 7, 4, 64})), V(Td({2, 7, 4, 64}))};
  CHECK_THROWS_AS(cell(x, wrong), StateError);
}

TEST_CASE("encode and decode steps") {
  SlateModel<double> m(mini_config(), 3);
  std::mt19937_64 rng(6);
  Td a = random_tensor<double>({3, 2, 16, 4}, rng), b = random_tensor<double>({3, 2, 16, 4}, rng);

  auto e1 = m.encode_step(V(a), m.initial_encoder_state(3));
  CHECK(e1.latent.shape() == Shape{3, 4});
  for (double z : e1.latent.value().values()) CHECK(std::abs(z) < 1.0);
  auto e1b = m.encode_step(V(a), m.initial_encoder_state(3));
  CHECK(e1b.latent.value() == e1.latent.value());
  CHECK(m.encode_step(V(a), e1.state).latent.value() != e1.latent.value());

  // Processing another sequence first leaves no trace after a reset.
  auto eb = m.encode_step(V(b), m.initial_encoder_state(3));
  m.encode_step(V(b), eb.state);
  CHECK(m.encode_step(V(a), m.initial_encoder_state(3)).latent.value() == e1.latent.value());

  auto d = m.decode_step(e1.latent, m.initial_decoder_state(3));
  CHECK(d.csi.shape() == Shape{3, 2, 16, 4});
  CHECK_THROWS_AS(m.decode_step(e1.latent, m.initial_decoder_state(2)), StateError);
  CHECK_THROWS_AS(m.encode_step(V(a), m.initial_decoder_state(3)), StateError);
  CHECK_THROWS_AS(m.decode_step(V(Td({3, 5})), m.initial_decoder_state(3)), DimensionError);
  CHECK_THROWS_AS(m.encode_step(V(Td({3, 2, 16, 5})), m.initial_encoder_state(3)), DimensionError);

  // Batch rows are independent streams.
  Td row({1, 2, 16, 4}, std::vector<double>(a.data() + 128, a.data() + 256));
  auto single = m.encode_step(V(row), m.initial_encoder_state(1));
  for (std::size_t i = 0; i < 4; ++i) CHECK(single.latent.value()[i] == doctest::Approx(e1.latent.value()[4 + i]).epsilon(1e-12));
}

TEST_CASE("every parameter receives a gradient") {
  SlateModel<float> m(ModelConfig{}, 11);
  std::mt19937_64 rng(7);
  Tensor<float> x0 = random_tensor<float>({2, 2, 32, 14}, rng), x1 = random_tensor<float>({2, 2, 32, 14}, rng);
  auto es = m.initial_encoder_state(2);
  auto ds = m.initial_decoder_state(2);
  Var<float> loss;
  for (const Tensor<float>* x : {&x0, &x1}) {
    auto e = m.encode_step(Var<float>(*x), es);
    auto d = m.decode_step(ops::ste_quantize(e.latent, QuantizerConfig{2}), ds);
    es = e.state;
    ds = d.state;
    Var<float> l = ops::mean_sgcs(d.csi, *x);
    loss = loss.defined() ? ops::add(loss, l) : l;
  }
  backward(loss);
  std::size_t dead = 0;
  for (const auto& p : m.parameters().items()) {
    bool any = false;
    if (!p.var.grad().empty()) {
      for (float g : p.var.grad().values()) any = any || g != 0.0f;
    }
    if (!any) {
      ++dead;
      MESSAGE("no gradient reaches " << p.name);
    }
  }
  CHECK(dead == 0);
}

TEST_CASE("encoder-decoder gradients match finite differences") {
  SlateModel<double> m(mini_config(), 13);
  std::mt19937_64 rng(9);
  std::vector<Td> xs = {random_tensor<double>({2, 2, 16, 4}, rng), random_tensor<double>({2, 2, 16, 4}, rng)};
  auto loss = [&] {
    auto es = m.initial_encoder_state(2);
    auto ds = m.initial_decoder_state(2);
    V total;
    for (const Td& x : xs) {
      auto e = m.encode_step(V(x), es);
      auto d = m.decode_step(e.latent, ds);
      es = e.state;
      ds = d.state;
      V l = ops::mean_sgcs(d.csi, x);
      total = total.defined() ? ops::add(total, l) : l;
    }
    return total;
  };
  auto params = m.parameters().vars();
  auto r = slate::testing::check_gradients(params, loss, 1e-4, 1e-9);
  MESSAGE("checked " << r.checked << ", max rel error " << r.max_rel_error);
  CHECK(r.checked == m.parameters().element_count());
  CHECK(r.pass_fraction() >= 0.999);
}

TEST_CASE("time-step stacking") {
  CsiSequence a(3, 2, 4, 2), b(3, 1, 4, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  for (auto& v : a.data()) v = {d(rng), d(rng)};
  for (auto& v : b.data()) v = {d(rng), d(rng)};
  std::vector<const CsiSequence*> in{&a, &b};
  Tensor<double> t = stack_time_step<double>(in, 1);
  CHECK(t.shape() == Shape{3, 2, 4, 2});
  CHECK(t[(2 * 2 + 1) * 8 + 3 * 2 + 1] == b.at(1, 0, 3, 1).imag());
  CsiSequence a2(3, 2, 4, 2), b2(3, 1, 4, 2);
  std::vector<CsiSequence*> out{&a2, &b2};
  unstack_time_step(t, out, 1);
  for (int l = 0; l < 2; ++l)
    for (int tx = 0; tx < 4; ++tx)
      for (int f = 0; f < 2; ++f) CHECK(a2.at(1, l, tx, f) == a.at(1, l, tx, f));
  CHECK(b2.at(1, 0, 2, 0) == b.at(1, 0, 2, 0));
  CHECK(b2.at(0, 0, 2, 0) == std::complex<double>{});
}

TEST_CASE("re-orthogonalization") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> d;
  CsiSequence v(2, 2, 32, 3);
  for (auto& x : v.data()) x = {d(rng), d(rng)};
  CsiSequence o = reorthogonalize(v);
  for (int n = 0; n < 2; ++n)
    for (int f = 0; f < 3; ++f) {
      auto c0 = o.column(n, 0, f), c1 = o.column(n, 1, f);
      std::complex<double> g00, g11, g01;
      for (int t = 0; t < 32; ++t) {
        g00 += std::conj(c0[t]) * c0[t];
        g11 += std::conj(c1[t]) * c1[t];
        g01 += std::conj(c0[t]) * c1[t];
      }
      CHECK(std::abs(g00 - 1.0) < 1e-12);
      CHECK(std::abs(g11 - 1.0) < 1e-12);
      CHECK(std::abs(g01) < 1e-6);
    }
  CsiSequence again = reorthogonalize(o);
  for (std::size_t i = 0; i < o.data().size(); ++i) CHECK(std::abs(again.data()[i] - o.data()[i]) < 1e-12);

  CsiSequence dup(1, 2, 4, 1);
  for (int t = 0; t < 4; ++t) dup.at(0, 0, t, 0) = dup.at(0, 1, t, 0) = {double(t + 1), 0.5};
  CHECK_THROWS_AS(reorthogonalize(dup), DegeneracyError);
  CHECK_THROWS_AS(reorthogonalize(CsiSequence(1, 1, 4, 1)), ConfigError);
}

TEST_CASE("checkpoint roundtrip") {
  SlateModel<float> m(mini_config(), 17);
  Checkpoint c = make_checkpoint(m);
  c.step = 42;
  c.meta = {{"note", "x"}};
  const auto bytes = encode_checkpoint(c);
  Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.step == 42);
  CHECK(back.meta["note"] == "x");
  CHECK(encode_checkpoint(back) == bytes);
  SlateModel<float> m2 = model_from_checkpoint<float>(back);
  for (std::size_t i = 0; i < m.parameters().items().size(); ++i) {
    CHECK(m.parameters().items()[i].var.value() == m2.parameters().items()[i].var.value());
  }
  std::mt19937_64 rng(2);
  Tensor<float> x = random_tensor<float>({1, 2, 16, 4}, rng);
  CHECK(m.encode_step(Var<float>(x), m.initial_encoder_state(1)).latent.value() ==
        m2.encode_step(Var<float>(x), m2.initial_encoder_state(1)).latent.value());

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);

  ModelConfig other = mini_config();
  other.l_dim = 8;
  SlateModel<float> wrong(other, 1);
  CHECK_THROWS_AS(load_parameters(wrong, back), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "slate_ckpt_test.bin";
  write_checkpoint(c, path);
  CHECK(encode_checkpoint(read_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
}
