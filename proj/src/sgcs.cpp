#include "slate/sgcs.hpp"

#include <string>

namespace slate {

double column_sgcs(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b) {
  if (a.size() != b.size()) {
    throw DimensionError("column_sgcs: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  std::complex<double> inner = 0.0;
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inner += std::conj(a[i]) * b[i];
    na += std::norm(a[i]);
    nb += std::norm(b[i]);
  }
  if (na == 0.0 || nb == 0.0) throw DegeneracyError("column_sgcs: zero-norm column");
  return std::norm(inner) / (na * nb);
}

double sgcs(const CsiSequence& v, const CsiSequence& reconstruction) {
  if (!v.same_dims(reconstruction)) throw DimensionError("sgcs: sequence dimensions differ");
  double total = 0.0;
  for (int n = 0; n < v.n_time(); ++n) {
    for (int l = 0; l < v.rank(); ++l) {
      for (int f = 0; f < v.n_sb(); ++f) total += column_sgcs(v.column(n, l, f), reconstruction.column(n, l, f));
    }
  }
  return total / double(v.n_time() * v.rank() * v.n_sb());
}

namespace ops {

template <typename T>
Var<T> mean_sgcs(const Var<T>& prediction, const Tensor<T>& target) {
  const Shape& s = prediction.shape();
  if (s.size() != 4 || s[1] != 2 || target.shape() != s) {
    throw DimensionError("mean_sgcs: prediction " + to_string(s) + " and target " + to_string(target.shape()) +
                         " must both be [B, 2, n_tx, n_sb]");
  }
  const std::size_t batch = s[0], n_tx = s[2], n_sb = s[3];
  const std::size_t plane = n_tx * n_sb;
  const std::size_t columns = batch * n_sb;
  // Per-column sufficient statistics: Re/Im of v^H p, ||v||^2, ||p||^2.
  AlignedVector<double> c(columns), q(columns), vv(columns), pp(columns);
  const T* p = prediction.value().data();
  const T* v = target.data();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* pr = p + b * 2 * plane;
    const T* pi = pr + plane;
    const T* vr = v + b * 2 * plane;
    const T* vi = vr + plane;
    for (std::size_t f = 0; f < n_sb; ++f) {
      double cr = 0, ci = 0, nv = 0, np = 0;
      for (std::size_t t = 0; t < n_tx; ++t) {
        const std::size_t k = t * n_sb + f;
        cr += double(vr[k]) * pr[k] + double(vi[k]) * pi[k];
        ci += double(vr[k]) * pi[k] - double(vi[k]) * pr[k];
        nv += double(vr[k]) * vr[k] + double(vi[k]) * vi[k];
        np += double(pr[k]) * pr[k] + double(pi[k]) * pi[k];
      }
      if (nv == 0.0 || np == 0.0) {
        throw DegeneracyError("mean_sgcs: zero-norm column (sample " + std::to_string(b) + ", subband " +
                              std::to_string(f) + ")");
      }
      const std::size_t j = b * n_sb + f;
      c[j] = cr;
      q[j] = ci;
      vv[j] = nv;
      pp[j] = np;
      total += (cr * cr + ci * ci) / (nv * np);
    }
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / double(columns)));
  Var<T> tgt(target);
  return make_op<T>(std::move(out), {prediction, tgt},
                    [=, c = std::move(c), q = std::move(q), vv = std::move(vv), pp = std::move(pp)](Node<T>& self) {
                      Node<T>& np_ = *self.inputs[0];
                      const T* p = np_.value.data();
                      const T* v = self.inputs[1]->value.data();
                      T* g = np_.grad_buffer().data();
                      const double up = double(self.grad[0]) / double(columns);
                      for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t o = b * 2 * plane;
                        for (std::size_t f = 0; f < n_sb; ++f) {
                          const std::size_t j = b * n_sb + f;
                          const double den = vv[j] * pp[j];
                          const double rho = (c[j] * c[j] + q[j] * q[j]) / den;
                          for (std::size_t t = 0; t < n_tx; ++t) {
                            const std::size_t kr = o + t * n_sb + f;
                            const std::size_t ki = kr + plane;
                            const double a = v[kr], bb = v[ki];
                            const double dx = 2.0 * (c[j] * a - q[j] * bb) / den - 2.0 * rho * p[kr] / pp[j];
                            const double dy = 2.0 * (c[j] * bb + q[j] * a) / den - 2.0 * rho * p[ki] / pp[j];
                            g[kr] += static_cast<T>(up * dx);
                            g[ki] += static_cast<T>(up * dy);
                          }
                        }
                      }
                    });
}

template Var<float> mean_sgcs(const Var<float>&, const Tensor<float>&);
template Var<double> mean_sgcs(const Var<double>&, const Tensor<double>&);

}  // namespace ops
}  // namespace slate
