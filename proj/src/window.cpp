#include "slate/window.hpp"

#include <string>

namespace slate {

namespace {

std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

void check_tiling(std::size_t h, std::size_t w, std::size_t wh, std::size_t ww) {
  if (wh == 0 || ww == 0 || h % wh != 0 || w % ww != 0) {
    throw ConfigError("window " + std::to_string(wh) + "x" + std::to_string(ww) + " does not tile grid " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

std::size_t window_count(std::size_t h, std::size_t w, std::size_t wh, std::size_t ww) {
  check_tiling(h, w, wh, ww);
  return (h / wh) * (w / ww);
}

IndexMapPtr cyclic_shift_map(std::size_t h, std::size_t w, std::size_t c, long dy, long dx) {
  auto m = std::make_shared<IndexMap>();
  m->input_size = h * w * c;
  m->index.resize(h * w * c);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = wrap(static_cast<long>(y) - dy, h);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = wrap(static_cast<long>(x) - dx, w);
      for (std::size_t k = 0; k < c; ++k) {
        m->index[(y * w + x) * c + k] = static_cast<std::uint32_t>((sy * w + sx) * c + k);
      }
    }
  }
  return m;
}

IndexMapPtr window_partition_map(std::size_t h, std::size_t w, std::size_t c, std::size_t wh, std::size_t ww) {
  check_tiling(h, w, wh, ww);
  const std::size_t nwx = w / ww;
  auto m = std::make_shared<IndexMap>();
  m->input_size = h * w * c;
  m->index.resize(h * w * c);
  std::size_t o = 0;
  for (std::size_t wy = 0; wy < h / wh; ++wy) {
    for (std::size_t wx = 0; wx < nwx; ++wx) {
      for (std::size_t ty = 0; ty < wh; ++ty) {
        for (std::size_t tx = 0; tx < ww; ++tx) {
          const std::size_t src = ((wy * wh + ty) * w + (wx * ww + tx)) * c;
          for (std::size_t k = 0; k < c; ++k) m->index[o++] = static_cast<std::uint32_t>(src + k);
        }
      }
    }
  }
  return m;
}

IndexMapPtr window_reverse_map(std::size_t h, std::size_t w, std::size_t c, std::size_t wh, std::size_t ww) {
  auto fwd = window_partition_map(h, w, c, wh, ww);
  auto m = std::make_shared<IndexMap>();
  m->input_size = h * w * c;
  m->index.resize(h * w * c);
  for (std::size_t i = 0; i < fwd->index.size(); ++i) m->index[fwd->index[i]] = static_cast<std::uint32_t>(i);
  return m;
}

IndexMapPtr head_split_map(std::size_t groups, std::size_t tokens, std::size_t heads, std::size_t head_dim,
                           std::size_t parts, std::size_t part) {
  const std::size_t width = heads * head_dim;
  auto m = std::make_shared<IndexMap>();
  m->input_size = groups * tokens * parts * width;
  m->index.resize(groups * tokens * width);
  std::size_t o = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t n = 0; n < tokens; ++n) {
        const std::size_t src = (g * tokens + n) * parts * width + part * width + hd * head_dim;
        for (std::size_t e = 0; e < head_dim; ++e) m->index[o++] = static_cast<std::uint32_t>(src + e);
      }
    }
  }
  return m;
}

IndexMapPtr head_merge_map(std::size_t groups, std::size_t tokens, std::size_t heads, std::size_t head_dim) {
  auto m = std::make_shared<IndexMap>();
  m->input_size = groups * heads * tokens * head_dim;
  m->index.resize(m->input_size);
  std::size_t o = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t n = 0; n < tokens; ++n) {
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t src = ((g * heads + hd) * tokens + n) * head_dim;
        for (std::size_t e = 0; e < head_dim; ++e) m->index[o++] = static_cast<std::uint32_t>(src + e);
      }
    }
  }
  return m;
}

namespace ops {

namespace {
void require_grid(const char* op, const Shape& s) {
  if (s.size() != 4) throw DimensionError(std::string(op) + ": expected [B,H,W,C] grid, got " + to_string(s));
}
}  // namespace

template <typename T>
Var<T> window_partition(const Var<T>& grid, std::size_t wh, std::size_t ww) {
  require_grid("window_partition", grid.shape());
  const auto& s = grid.shape();
  const std::size_t nwin = window_count(s[1], s[2], wh, ww);
  return gather(grid, window_partition_map(s[1], s[2], s[3], wh, ww), Shape{s[0] * nwin, wh * ww, s[3]});
}

template <typename T>
Var<T> window_reverse(const Var<T>& windows, std::size_t h, std::size_t w, std::size_t wh, std::size_t ww) {
  const auto& s = windows.shape();
  const std::size_t nwin = window_count(h, w, wh, ww);
  if (s.size() != 3 || s[1] != wh * ww || s[0] % nwin != 0) {
    throw DimensionError("window_reverse: " + to_string(s) + " is not a stack of " + std::to_string(wh) + "x" +
                         std::to_string(ww) + " windows of a " + std::to_string(h) + "x" + std::to_string(w) +
                         " grid");
  }
  return gather(windows, window_reverse_map(h, w, s[2], wh, ww), Shape{s[0] / nwin, h, w, s[2]});
}

template <typename T>
Var<T> cyclic_shift(const Var<T>& grid, long dy, long dx) {
  require_grid("cyclic_shift", grid.shape());
  const auto& s = grid.shape();
  return gather(grid, cyclic_shift_map(s[1], s[2], s[3], dy, dx), s);
}

template Var<float> window_partition(const Var<float>&, std::size_t, std::size_t);
template Var<double> window_partition(const Var<double>&, std::size_t, std::size_t);
template Var<float> window_reverse(const Var<float>&, std::size_t, std::size_t, std::size_t, std::size_t);
template Var<double> window_reverse(const Var<double>&, std::size_t, std::size_t, std::size_t, std::size_t);
template Var<float> cyclic_shift(const Var<float>&, long, long);
template Var<double> cyclic_shift(const Var<double>&, long, long);

}  // namespace ops
}  // namespace slate
