#pragma once

#include <random>

#include "slate/tensor.hpp"

namespace slate::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace slate::testing
