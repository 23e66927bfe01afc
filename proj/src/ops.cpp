#include "slate/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

namespace slate {

IndexMapPtr compose(const IndexMap& first, const IndexMap& second) {
  if (second.input_size != first.output_size()) {
    throw DimensionError("cannot compose index maps: first yields " + std::to_string(first.output_size()) +
                         " elements, second expects " + std::to_string(second.input_size));
  }
  auto out = std::make_shared<IndexMap>();
  out->input_size = first.input_size;
  out->index.resize(second.index.size());
  for (std::size_t i = 0; i < second.index.size(); ++i) out->index[i] = first.index[second.index[i]];
  return out;
}

namespace ops {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatR<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatR<T>>;
template <typename T>
using ArrayX = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
Eigen::Map<ArrayX<T>> arr(Tensor<T>& t) {
  return Eigen::Map<ArrayX<T>>(t.data(), static_cast<Eigen::Index>(t.size()));
}
template <typename T>
Eigen::Map<const ArrayX<T>> arr(const Tensor<T>& t) {
  return Eigen::Map<const ArrayX<T>>(t.data(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
MapM<T> mat(Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MapM<T>(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
CMapM<T> mat(const Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return CMapM<T>(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  arr(out) = arr(a.value()) + arr(b.value());
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) arr(in->grad_buffer()) += arr(self.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  arr(out) = arr(a.value()) - arr(b.value());
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) arr(self.inputs[0]->grad_buffer()) += arr(self.grad);
    if (self.inputs[1]->requires_grad) arr(self.inputs[1]->grad_buffer()) -= arr(self.grad);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  arr(out) = arr(a.value()) * arr(b.value());
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) arr(na.grad_buffer()) += arr(self.grad) * arr(nb.value);
    if (nb.requires_grad) arr(nb.grad_buffer()) += arr(self.grad) * arr(na.value);
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  arr(out) = arr(a.value()) * factor;
  return make_op<T>(std::move(out), {a}, [factor](Node<T>& self) {
    arr(self.inputs[0]->grad_buffer()) += arr(self.grad) * factor;
  });
}

template <typename T>
Var<T> add_tiled(const Var<T>& x, const Var<T>& y) {
  const std::size_t n = x.size();
  const std::size_t period = y.size();
  if (period == 0 || n % period != 0) {
    throw DimensionError("add_tiled: " + to_string(y.shape()) + " does not tile " + to_string(x.shape()));
  }
  Tensor<T> out = x.value();
  const T* py = y.value().data();
  for (std::size_t base = 0; base < n; base += period) {
    T* po = out.data() + base;
    for (std::size_t j = 0; j < period; ++j) po[j] += py[j];
  }
  return make_op<T>(std::move(out), {x, y}, [n, period](Node<T>& self) {
    if (self.inputs[0]->requires_grad) arr(self.inputs[0]->grad_buffer()) += arr(self.grad);
    if (self.inputs[1]->requires_grad) {
      T* gy = self.inputs[1]->grad_buffer().data();
      const T* g = self.grad.data();
      for (std::size_t base = 0; base < n; base += period) {
        for (std::size_t j = 0; j < period; ++j) gy[j] += g[base + j];
      }
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  mat(out, m, n).noalias() = mat(a.value(), m, k) * mat(b.value(), k, n);
  return make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    auto g = mat(static_cast<const Tensor<T>&>(self.grad), m, n);
    if (na.requires_grad) mat(na.grad_buffer(), m, k).noalias() += g * mat(nb.value, k, n).transpose();
    if (nb.requires_grad) mat(nb.grad_buffer(), k, n).noalias() += mat(na.value, m, k).transpose() * g;
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = x.shape();
  if (weight.shape().size() != 2 || xs.empty() || xs.back() != weight.shape()[0]) {
    throw DimensionError("linear: input " + to_string(xs) + " does not match weight " + to_string(weight.shape()));
  }
  const std::size_t in = weight.shape()[0], outd = weight.shape()[1];
  const std::size_t rows = x.size() / in;
  if (bias.defined() && bias.size() != outd) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  Shape os = xs;
  os.back() = outd;
  Tensor<T> out(os);
  auto y = mat(out, rows, outd);
  y.noalias() = mat(x.value(), rows, in) * mat(weight.value(), in, outd);
  if (bias.defined()) y.rowwise() += mat(bias.value(), 1, outd).row(0);
  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op<T>(std::move(out), std::move(inputs), [rows, in, outd](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& nw = *self.inputs[1];
    auto g = mat(static_cast<const Tensor<T>&>(self.grad), rows, outd);
    if (nx.requires_grad) mat(nx.grad_buffer(), rows, in).noalias() += g * mat(nw.value, in, outd).transpose();
    if (nw.requires_grad) mat(nw.grad_buffer(), in, outd).noalias() += mat(nx.value, rows, in).transpose() * g;
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      mat(self.inputs[2]->grad_buffer(), 1, outd) += g.colwise().sum();
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != (transpose_b ? bs[2] : bs[1])) {
    throw DimensionError(std::string("bmm") + (transpose_b ? " (b transposed)" : "") + ": incompatible shapes " +
                         to_string(as) + " and " + to_string(bs));
  }
  const std::size_t batch = as[0], m = as[1], k = as[2];
  const std::size_t n = transpose_b ? bs[1] : bs[2];
  Tensor<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    auto y = mat(out, m, n, i * m * n);
    auto am = mat(a.value(), m, k, i * m * k);
    if (transpose_b) {
      y.noalias() = am * mat(b.value(), n, k, i * n * k).transpose();
    } else {
      y.noalias() = am * mat(b.value(), k, n, i * k * n);
    }
  }
  return make_op<T>(std::move(out), {a, b}, [batch, m, k, n, transpose_b](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    const Tensor<T>& grad = self.grad;
    for (std::size_t i = 0; i < batch; ++i) {
      auto g = mat(grad, m, n, i * m * n);
      if (transpose_b) {
        if (na.requires_grad) mat(na.grad_buffer(), m, k, i * m * k).noalias() += g * mat(nb.value, n, k, i * n * k);
        if (nb.requires_grad) {
          mat(nb.grad_buffer(), n, k, i * n * k).noalias() += g.transpose() * mat(na.value, m, k, i * m * k);
        }
      } else {
        if (na.requires_grad) {
          mat(na.grad_buffer(), m, k, i * m * k).noalias() += g * mat(nb.value, k, n, i * k * n).transpose();
        }
        if (nb.requires_grad) {
          mat(nb.grad_buffer(), k, n, i * k * n).noalias() += mat(na.value, m, k, i * m * k).transpose() * g;
        }
      }
    }
  });
}

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  const std::size_t cols = last_dim(x.shape());
  const std::size_t rows = x.size() / cols;
  const T* px = x.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(px[i])) throw NumericalError("softmax_lastdim: NaN in input of shape " + to_string(x.shape()));
  }
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * cols;
    T* yr = out.data() + r * cols;
    const T mx = *std::max_element(xr, xr + cols);
    for (std::size_t c = 0; c < cols; ++c) yr[c] = xr[c] - mx;
  }
  arr(out) = arr(out).exp();
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = out.data() + r * cols;
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += yr[c];
    const T inv = T(1) / total;
    for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
  return make_op<T>(std::move(out), {x}, [rows, cols](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    const T* y = self.value.data();
    const T* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * y[o + c];
      for (std::size_t c = 0; c < cols; ++c) gx[o + c] += y[o + c] * (g[o + c] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const std::size_t cols = last_dim(x.shape());
  if (gamma.size() != cols || beta.size() != cols) {
    throw DimensionError("layer_norm: affine parameters " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " do not match input " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / cols;
  Tensor<T> out(x.shape());
  AlignedVector<T> rstd(rows);
  const T* px = x.value().data();
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * cols;
    T mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= T(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    T* yr = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * pg[c] + pb[c];
  }
  return make_op<T>(std::move(out), {x, gamma, beta}, [rows, cols, rstd = std::move(rstd)](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& ng = *self.inputs[1];
    Node<T>& nb = *self.inputs[2];
    const T* px = nx.value.data();
    const T* pg = ng.value.data();
    const T* g = self.grad.data();
    T* gx = nx.requires_grad ? nx.grad_buffer().data() : nullptr;
    T* gg = ng.requires_grad ? ng.grad_buffer().data() : nullptr;
    T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
    AlignedVector<T> xhat(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = px + r * cols;
      const T* gr = g + r * cols;
      T mu = 0;
      for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
      mu /= T(cols);
      const T rs = rstd[r];
      T mean_d = 0, mean_dx = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        xhat[c] = (xr[c] - mu) * rs;
        const T d = gr[c] * pg[c];
        mean_d += d;
        mean_dx += d * xhat[c];
        if (gg) gg[c] += gr[c] * xhat[c];
        if (gb) gb[c] += gr[c];
      }
      if (!gx) continue;
      mean_d /= T(cols);
      mean_dx /= T(cols);
      T* gxr = gx + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gxr[c] += rs * (gr[c] * pg[c] - mean_d - xhat[c] * mean_dx);
    }
  });
}

template <typename T>
Var<T> lrelu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  const T* px = x.value().data();
  T* py = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) py[i] = std::max(px[i], T(0)) + slope * std::min(px[i], T(0));
  return make_op<T>(std::move(out), {x}, [slope, n](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    const T* xv = nx.value.data();
    const T* g = self.grad.data();
    T* gx = nx.grad_buffer().data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (slope + (T(1) - slope) * static_cast<T>(xv[i] > T(0)));
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> out(x.shape());
  arr(out) = arr(x.value()).tanh();
  return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
    auto y = arr(static_cast<const Tensor<T>&>(self.value));
    arr(self.inputs[0]->grad_buffer()) += arr(static_cast<const Tensor<T>&>(self.grad)) * (T(1) - y * y);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  arr(out) = arr(x.value()).logistic();
  return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
    auto y = arr(static_cast<const Tensor<T>&>(self.value));
    arr(self.inputs[0]->grad_buffer()) += arr(static_cast<const Tensor<T>&>(self.grad)) * y * (T(1) - y);
  });
}

template <typename T>
Var<T> concat_lastdim(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.empty() || as.size() != bs.size() || !std::equal(as.begin(), as.end() - 1, bs.begin())) {
    throw DimensionError("concat_lastdim: incompatible shapes " + to_string(as) + " and " + to_string(bs));
  }
  const std::size_t ca = as.back(), cb = bs.back(), rows = a.size() / ca;
  Shape os = as;
  os.back() = ca + cb;
  Tensor<T> out(os);
  mat(out, rows, ca + cb).leftCols(ca) = mat(a.value(), rows, ca);
  mat(out, rows, ca + cb).rightCols(cb) = mat(b.value(), rows, cb);
  return make_op<T>(std::move(out), {a, b}, [rows, ca, cb](Node<T>& self) {
    auto g = mat(static_cast<const Tensor<T>&>(self.grad), rows, ca + cb);
    if (self.inputs[0]->requires_grad) mat(self.inputs[0]->grad_buffer(), rows, ca) += g.leftCols(ca);
    if (self.inputs[1]->requires_grad) mat(self.inputs[1]->grad_buffer(), rows, cb) += g.rightCols(cb);
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
    arr(self.inputs[0]->grad_buffer()) += arr(static_cast<const Tensor<T>&>(self.grad));
  });
}

template <typename T>
Var<T> gather(const Var<T>& x, const IndexMapPtr& map, Shape out_shape) {
  const std::size_t in_per = map->input_size;
  const std::size_t out_per = map->output_size();
  if (in_per == 0 || x.size() % in_per != 0) {
    throw DimensionError("gather: input " + to_string(x.shape()) + " is not a whole number of " +
                         std::to_string(in_per) + "-element samples");
  }
  const std::size_t batch = x.size() / in_per;
  if (numel(out_shape) != batch * out_per) {
    throw DimensionError("gather: output shape " + to_string(out_shape) + " does not hold " +
                         std::to_string(batch) + " samples of " + std::to_string(out_per));
  }
  Tensor<T> out(std::move(out_shape));
  const std::uint32_t* idx = map->index.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = x.value().data() + b * in_per;
    T* dst = out.data() + b * out_per;
    for (std::size_t i = 0; i < out_per; ++i) dst[i] = src[idx[i]];
  }
  return make_op<T>(std::move(out), {x}, [map, batch, in_per, out_per](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    const T* g = self.grad.data();
    const std::uint32_t* idx = map->index.data();
    for (std::size_t b = 0; b < batch; ++b) {
      T* dst = gx + b * in_per;
      const T* src = g + b * out_per;
      for (std::size_t i = 0; i < out_per; ++i) dst[idx[i]] += src[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  return make_op<T>(Tensor<T>::scalar(arr(x.value()).sum()), {x}, [](Node<T>& self) {
    arr(self.inputs[0]->grad_buffer()) += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const T inv = T(1) / T(x.size());
  return make_op<T>(Tensor<T>::scalar(arr(x.value()).sum() * inv), {x}, [inv](Node<T>& self) {
    arr(self.inputs[0]->grad_buffer()) += self.grad[0] * inv;
  });
}

template <typename T>
Var<T> identity_gradient(const Var<T>& x, Tensor<T> forward_value) {
  require_same_shape("identity_gradient", x.shape(), forward_value.shape());
  return make_op<T>(std::move(forward_value), {x}, [](Node<T>& self) {
    arr(self.inputs[0]->grad_buffer()) += arr(static_cast<const Tensor<T>&>(self.grad));
  });
}

#define SLATE_INSTANTIATE_OPS(T)                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                  \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                  \
  template Var<T> scale(const Var<T>&, T);                                            \
  template Var<T> add_tiled(const Var<T>&, const Var<T>&);                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                               \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                            \
  template Var<T> softmax_lastdim(const Var<T>&);                                     \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);         \
  template Var<T> lrelu(const Var<T>&, T);                                            \
  template Var<T> tanh(const Var<T>&);                                                \
  template Var<T> sigmoid(const Var<T>&);                                             \
  template Var<T> concat_lastdim(const Var<T>&, const Var<T>&);                       \
  template Var<T> reshape(const Var<T>&, Shape);                                      \
  template Var<T> gather(const Var<T>&, const IndexMapPtr&, Shape);                   \
  template Var<T> sum(const Var<T>&);                                                 \
  template Var<T> mean(const Var<T>&);                                                \
  template Var<T> identity_gradient(const Var<T>&, Tensor<T>);

SLATE_INSTANTIATE_OPS(float)
SLATE_INSTANTIATE_OPS(double)

}  // namespace ops
}  // namespace slate
