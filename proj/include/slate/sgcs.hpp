#pragma once

#include <complex>
#include <span>

#include "slate/autograd.hpp"
#include "slate/csi.hpp"

namespace slate {

// |a^H b|^2 / (||a||^2 ||b||^2). Throws DegeneracyError on a zero column.
double column_sgcs(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b);

// Mean column SGCS over time samples, subbands and layers.
double sgcs(const CsiSequence& v, const CsiSequence& reconstruction);

namespace ops {

// Mean SGCS between a real-stacked prediction [B, 2, n_tx, n_sb] and a target
// of the same layout, differentiable in `prediction`.
template <typename T>
Var<T> mean_sgcs(const Var<T>& prediction, const Tensor<T>& target);

}  // namespace ops
}  // namespace slate
