#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "slate/autograd.hpp"

namespace slate {

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLayerNormEps = 1e-5;

// Per-sample element permutation/selection used by every layout-changing
// primitive (window partition, cyclic shift, patchify, depth-to-space...).
// output[i] = input[index[i]] within each of the B samples of a batch, where
// B = input.size() / input_size.
struct IndexMap {
  std::vector<std::uint32_t> index;
  std::size_t input_size = 0;

  std::size_t output_size() const noexcept { return index.size(); }
};
using IndexMapPtr = std::shared_ptr<const IndexMap>;

// Map equivalent to applying `first` and then `second`.
IndexMapPtr compose(const IndexMap& first, const IndexMap& second);

namespace ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);

// x + y with y repeated over x's storage: out[i] = x[i] + y[i % y.size()].
template <typename T> Var<T> add_tiled(const Var<T>& x, const Var<T>& y);

// 2-D matrix product.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

// Affine map over the last axis: x[..., in] * weight[in, out] + bias[out].
// `bias` may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// Batched product a[B, m, k] * b[B, k, n], or a * b^T with b[B, n, k].
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

template <typename T> Var<T> softmax_lastdim(const Var<T>& x);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(kLayerNormEps));

template <typename T> Var<T> lrelu(const Var<T>& x, T slope = T(kLeakySlope));
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);

template <typename T> Var<T> concat_lastdim(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> gather(const Var<T>& x, const IndexMapPtr& map, Shape out_shape);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

// Forward value is `forward_value`; the backward pass hands the upstream
// gradient to `x` unchanged (identity Jacobian).
template <typename T> Var<T> identity_gradient(const Var<T>& x, Tensor<T> forward_value);

}  // namespace ops
}  // namespace slate
