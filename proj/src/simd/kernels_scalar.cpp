#include <cmath>

#include "simd/tables.hpp"

namespace lmlvamp::simd::detail {
namespace {

inline double sigmoid1(double z) {
  // Clamp keeps exp finite; sigmoid is already 0/1 to double precision there.
  if (z < -700.0) z = -700.0;
  if (z > 700.0) z = 700.0;
  return 1.0 / (1.0 + std::exp(-z));
}

void mlp_forward(const MlpView& w, const double* x, std::size_t n, double* hidden, double* y) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc[kMaxMlpPorts];
    for (std::size_t o = 0; o < w.out; ++o) acc[o] = w.b2[o];
    for (std::size_t k = 0; k < w.hidden; ++k) {
      double pre = w.b1[k];
      for (std::size_t c = 0; c < w.in; ++c) pre += w.w1[k * w.in + c] * x[c * n + i];
      const double h = sigmoid1(pre);
      hidden[k * n + i] = h;
      for (std::size_t o = 0; o < w.out; ++o) acc[o] += w.w2[o * w.hidden + k] * h;
    }
    for (std::size_t o = 0; o < w.out; ++o) y[o * n + i] = acc[o];
  }
}

void mlp_backward(const MlpView& w, const double* x, const double* hidden, const double* dy,
                  std::size_t n, const MlpGrad& g, double* dx) {
  if (dx)
    for (std::size_t j = 0; j < w.in * n; ++j) dx[j] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < w.out; ++o) g.b2[o] += dy[o * n + i];
    for (std::size_t k = 0; k < w.hidden; ++k) {
      const double h = hidden[k * n + i];
      double dh = 0.0;
      for (std::size_t o = 0; o < w.out; ++o) {
        const double d = dy[o * n + i];
        dh += w.w2[o * w.hidden + k] * d;
        g.w2[o * w.hidden + k] += d * h;
      }
      const double dpre = dh * h * (1.0 - h);
      g.b1[k] += dpre;
      for (std::size_t c = 0; c < w.in; ++c) {
        g.w1[k * w.in + c] += dpre * x[c * n + i];
        if (dx) dx[c * n + i] += w.w1[k * w.in + c] * dpre;
      }
    }
  }
}

void sigmoid(const double* z, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid1(z[i]);
}

void exp_kernel(const double* z, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(z[i]);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::kScalar, mlp_forward, mlp_backward, sigmoid, exp_kernel};
  return table;
}

}  // namespace lmlvamp::simd::detail
