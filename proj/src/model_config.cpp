#include "slate/model_config.hpp"

#include "slate/errors.hpp"

namespace slate {

std::string to_string(const GridShape& g) {
  return std::to_string(g.h) + "x" + std::to_string(g.w) + "x" + std::to_string(g.c);
}

namespace {

int product(const std::vector<int>& v, std::size_t from, std::size_t to) {
  int p = 1;
  for (std::size_t i = from; i < to; ++i) p *= v[i];
  return p;
}

}  // namespace

GridShape ModelConfig::embed_grid() const { return {n_sb / patch_h, n_tx / patch_w, e_dim}; }

GridShape ModelConfig::encoder_grid(int r) const {
  const int scale = product(down, 0, static_cast<std::size_t>(r) + 1);
  const GridShape g = embed_grid();
  return {g.h / scale, g.w / scale, g.c * scale};
}

GridShape ModelConfig::decoder_grid(int r) const {
  const int scale = product(up, static_cast<std::size_t>(r), up.size());
  const GridShape g = embed_grid();
  return {g.h / scale, g.w / scale, g.c * scale};
}

GridShape ModelConfig::expand_grid(int r) const {
  const int scale = product(up, static_cast<std::size_t>(r) + 1, up.size());
  const GridShape g = embed_grid();
  return {g.h / scale, g.w / scale, g.c * scale};
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (patch_h < 1 || patch_w < 1 || e_dim < 1 || l_dim < 1 || b_bits < 1 || mlp_ratio < 1 || n_tx < 1 ||
      n_sb < 1 || window_h < 1 || window_w < 1) {
    fail("all sizes must be positive");
  }
  if (b_bits > 16) fail("b_bits must be at most 16");
  if (n_sb % patch_h != 0 || n_tx % patch_w != 0) {
    fail("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) + " does not tile the " +
         std::to_string(n_sb) + "x" + std::to_string(n_tx) + " subband/antenna grid");
  }
  const std::size_t r = down.size();
  if (r == 0) fail("at least one stage is required");
  if (up.size() != r || depth.size() != r || heads.size() != r) {
    fail("down, up, depth and heads must all have one entry per stage");
  }
  for (std::size_t i = 0; i < r; ++i) {
    if (down[i] < 1 || up[i] < 1 || heads[i] < 1) fail("stage factors and head counts must be positive");
    if (depth[i] < 2 || depth[i] % 2 != 0) {
      fail("stage " + std::to_string(i + 1) + " depth " + std::to_string(depth[i]) +
           " must be even (alternating W-MSA / SW-MSA)");
    }
  }
  const GridShape e = embed_grid();
  GridShape prev = e;
  for (int s = 0; s < stages(); ++s) {
    const int d = down[s];
    if (prev.h % d != 0 || prev.w % d != 0) {
      fail("downscale factor " + std::to_string(d) + " does not divide grid " + to_string(prev));
    }
    prev = encoder_grid(s);
  }
  const int total_up = product(up, 0, up.size());
  if (e.h % total_up != 0 || e.w % total_up != 0) {
    fail("total upscale factor " + std::to_string(total_up) + " does not divide grid " + to_string(e));
  }

  auto check_stage = [&](const GridShape& g, int nheads, const std::string& where) {
    if (g.h % window_h != 0 || g.w % window_w != 0) {
      fail("window " + std::to_string(window_h) + "x" + std::to_string(window_w) + " does not tile " + where +
           " grid " + to_string(g));
    }
    if (g.c % nheads != 0) {
      fail(std::to_string(nheads) + " heads do not divide " + std::to_string(g.c) + " channels at " + where);
    }
  };
  for (int s = 0; s < stages(); ++s) {
    check_stage(encoder_grid(s), heads[s], "encoder stage " + std::to_string(s + 1));
    check_stage(decoder_grid(s), decoder_heads(s), "decoder stage " + std::to_string(s + 1));
  }
}

}  // namespace slate
