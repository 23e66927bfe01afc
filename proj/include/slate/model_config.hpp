#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace slate {

struct GridShape {
  int h = 0;
  int w = 0;
  int c = 0;

  int tokens() const { return h * w; }
  int elements() const { return h * w * c; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

std::string to_string(const GridShape& g);

// Architecture hyperparameters. Token grids are (n_sb / patch_h) x
// (n_tx / patch_w): subbands along the height, antenna groups along the width.
struct ModelConfig {
  int patch_h = 1;
  int patch_w = 4;
  int e_dim = 32;
  std::vector<int> down = {1, 1, 2};   // d_r, encoder stage order
  std::vector<int> up = {2, 1, 1};     // u_r, decoder stage order
  std::vector<int> depth = {2, 4, 2};  // alpha_r, encoder stage order
  std::vector<int> heads = {2, 4, 8};  // encoder stage order
  int l_dim = 64;
  int b_bits = 2;
  int window_h = 7;
  int window_w = 4;
  int mlp_ratio = 4;
  int n_tx = 32;
  int n_sb = 14;
  double lrelu_slope = 0.01;

  int stages() const { return static_cast<int>(down.size()); }

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  GridShape embed_grid() const;
  // Grid produced by encoder patch merge r (and consumed by encoder cell r).
  GridShape encoder_grid(int r) const;
  // Grid consumed by decoder cell r (the decoder head emits decoder_grid(0)).
  GridShape decoder_grid(int r) const;
  // Grid produced by decoder patch expand r.
  GridShape expand_grid(int r) const;

  // Decoder stage r mirrors encoder stage R-1-r.
  int decoder_depth(int r) const { return depth[stages() - 1 - r]; }
  int decoder_heads(int r) const { return heads[stages() - 1 - r]; }

  // Per-axis cyclic shift for the odd layers on a grid; 0 where the window
  // spans the whole axis.
  int shift_h(const GridShape& g) const { return window_h == g.h ? 0 : window_h / 2; }
  int shift_w(const GridShape& g) const { return window_w == g.w ? 0 : window_w / 2; }
};

}  // namespace slate
