#pragma once

#include <cstddef>

#include "slate/ops.hpp"

namespace slate {

// Token grids are stored [B, H, W, C] row-major. The builders below return
// per-sample maps (input_size = H*W*C) for use with ops::gather.

// torch.roll semantics: out[(y + dy) mod H, (x + dx) mod W] = in[y, x].
IndexMapPtr cyclic_shift_map(std::size_t h, std::size_t w, std::size_t c, long dy, long dx);

// [H, W, C] -> [nWin, wh*ww, C], windows in row-major order.
IndexMapPtr window_partition_map(std::size_t h, std::size_t w, std::size_t c, std::size_t wh, std::size_t ww);
IndexMapPtr window_reverse_map(std::size_t h, std::size_t w, std::size_t c, std::size_t wh, std::size_t ww);

// [G, N, parts*heads*hd] -> part `part` as [G*heads, N, hd].
IndexMapPtr head_split_map(std::size_t groups, std::size_t tokens, std::size_t heads, std::size_t head_dim,
                           std::size_t parts, std::size_t part);
// [G*heads, N, hd] -> [G, N, heads*hd].
IndexMapPtr head_merge_map(std::size_t groups, std::size_t tokens, std::size_t heads, std::size_t head_dim);

std::size_t window_count(std::size_t h, std::size_t w, std::size_t wh, std::size_t ww);

namespace ops {

template <typename T>
Var<T> window_partition(const Var<T>& grid, std::size_t wh, std::size_t ww);

// Inverse of window_partition for a [B*nWin, wh*ww, C] tensor.
template <typename T>
Var<T> window_reverse(const Var<T>& windows, std::size_t h, std::size_t w, std::size_t wh, std::size_t ww);

template <typename T>
Var<T> cyclic_shift(const Var<T>& grid, long dy, long dx);

}  // namespace ops
}  // namespace slate
