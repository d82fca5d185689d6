// AVX2 + FMA variants. Four samples per __m256d; the tail (< 4 samples) is
// handed to the scalar reference so both paths share one definition of the
// edge behaviour. Hidden activations are kept per 4-sample block (hidden x 4
// contiguous) so the forward and backward sweeps walk memory linearly; the
// tail block uses the scalar layout.
#include <immintrin.h>

#include <array>
#include <cmath>
#include <vector>

#include "simd/tables.hpp"

namespace lmlvamp::simd::detail {
namespace {

// Cephes-style exp: range reduction by ln2 then a (2,3) Pade approximant
// exp(r) = (q + p) / (q - p). Matches std::exp to about 1 ulp on [-708, 709].
struct ExpParts {
  __m256d num, den, scale;  // exp(x) = scale * num / den
};

inline ExpParts exp_parts(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(1.42860682030941723212E-6), x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(_mm256_set1_pd(1.26177193074810590878E-4), xx,
                               _mm256_set1_pd(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(_mm256_set1_pd(3.00198505138664455042E-6), xx,
                               _mm256_set1_pd(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.00000000000000000009E0));

  const __m128i n32 = _mm256_cvtpd_epi32(fx);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return {_mm256_add_pd(qx, px), _mm256_sub_pd(qx, px), _mm256_castsi256_pd(n64)};
}

inline __m256d exp_pd(__m256d x) {
  const ExpParts e = exp_parts(x);
  return _mm256_mul_pd(_mm256_div_pd(e.num, e.den), e.scale);
}

// 1 / (1 + exp(-z)) with a single division.
inline __m256d sigmoid_pd(__m256d z) {
  z = _mm256_min_pd(_mm256_max_pd(z, _mm256_set1_pd(-700.0)), _mm256_set1_pd(700.0));
  const ExpParts e = exp_parts(_mm256_sub_pd(_mm256_setzero_pd(), z));
  return _mm256_div_pd(e.den, _mm256_fmadd_pd(e.scale, e.num, e.den));
}

inline double hsum(__m256d v) {
  alignas(32) double l[4];
  _mm256_store_pd(l, v);
  return (l[0] + l[1]) + (l[2] + l[3]);
}

// IN / OUT of zero mean "read from the view"; fixed sizes let the compiler
// keep the port vectors in registers.
template <std::size_t IN, std::size_t OUT>
void mlp_forward_impl(const MlpView& w, const double* x, std::size_t n, double* hidden, double* y) {
  const std::size_t in = IN ? IN : w.in;
  const std::size_t out = OUT ? OUT : w.out;
  const std::size_t nv = n - n % 4;
  for (std::size_t i = 0; i < nv; i += 4) {
    __m256d xin[kMaxMlpPorts];
    __m256d acc[kMaxMlpPorts];
    for (std::size_t c = 0; c < in; ++c) xin[c] = _mm256_loadu_pd(x + c * n + i);
    for (std::size_t o = 0; o < out; ++o) acc[o] = _mm256_set1_pd(w.b2[o]);
    for (std::size_t k = 0; k < w.hidden; ++k) {
      __m256d pre = _mm256_set1_pd(w.b1[k]);
      const double* row = w.w1 + k * in;
      for (std::size_t c = 0; c < in; ++c) pre = _mm256_fmadd_pd(_mm256_set1_pd(row[c]), xin[c], pre);
      const __m256d h = sigmoid_pd(pre);
      _mm256_storeu_pd(hidden + i * w.hidden + 4 * k, h);
      for (std::size_t o = 0; o < out; ++o)
        acc[o] = _mm256_fmadd_pd(_mm256_set1_pd(w.w2[o * w.hidden + k]), h, acc[o]);
    }
    for (std::size_t o = 0; o < out; ++o) _mm256_storeu_pd(y + o * n + i, acc[o]);
  }
  if (nv == n) return;
  // Tail: run the scalar kernel on a compacted copy of the remaining samples.
  const std::size_t m = n - nv;
  std::vector<double> xs(in * m), ys(out * m);
  for (std::size_t c = 0; c < in; ++c)
    for (std::size_t j = 0; j < m; ++j) xs[c * m + j] = x[c * n + nv + j];
  scalar_table().mlp_forward(w, xs.data(), m, hidden + nv * w.hidden, ys.data());
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t j = 0; j < m; ++j) y[o * n + nv + j] = ys[o * m + j];
}

template <std::size_t IN, std::size_t OUT>
void mlp_backward_impl(const MlpView& w, const double* x, const double* hidden, const double* dy,
                       std::size_t n, const MlpGrad& g, double* dx) {
  const std::size_t in = IN ? IN : w.in;
  const std::size_t out = OUT ? OUT : w.out;
  const std::size_t nv = n - n % 4;
  const std::size_t H = w.hidden;
  // Lane-wise gradient accumulators, reduced once at the end in a fixed order.
  struct Lanes {
    __m256d v;
  };
  thread_local std::vector<Lanes> acc;
  const std::size_t n_w1 = H * in, n_w2 = out * H;
  acc.assign(n_w1 + H + n_w2 + out, Lanes{_mm256_setzero_pd()});
  __m256d* aw1 = &acc.data()->v;
  __m256d* ab1 = aw1 + n_w1;
  __m256d* aw2 = ab1 + H;
  __m256d* ab2 = aw2 + n_w2;

  for (std::size_t i = 0; i < nv; i += 4) {
    __m256d xin[kMaxMlpPorts], d[kMaxMlpPorts], dxa[kMaxMlpPorts];
    for (std::size_t c = 0; c < in; ++c) {
      xin[c] = _mm256_loadu_pd(x + c * n + i);
      dxa[c] = _mm256_setzero_pd();
    }
    for (std::size_t o = 0; o < out; ++o) {
      d[o] = _mm256_loadu_pd(dy + o * n + i);
      ab2[o] = _mm256_add_pd(ab2[o], d[o]);
    }
    for (std::size_t k = 0; k < H; ++k) {
      const __m256d h = _mm256_loadu_pd(hidden + i * H + 4 * k);
      __m256d dh = _mm256_setzero_pd();
      for (std::size_t o = 0; o < out; ++o) {
        dh = _mm256_fmadd_pd(_mm256_set1_pd(w.w2[o * H + k]), d[o], dh);
        aw2[o * H + k] = _mm256_fmadd_pd(d[o], h, aw2[o * H + k]);
      }
      const __m256d dpre =
          _mm256_mul_pd(_mm256_mul_pd(dh, h), _mm256_sub_pd(_mm256_set1_pd(1.0), h));
      ab1[k] = _mm256_add_pd(ab1[k], dpre);
      const double* row = w.w1 + k * in;
      for (std::size_t c = 0; c < in; ++c) {
        aw1[k * in + c] = _mm256_fmadd_pd(dpre, xin[c], aw1[k * in + c]);
        dxa[c] = _mm256_fmadd_pd(_mm256_set1_pd(row[c]), dpre, dxa[c]);
      }
    }
    if (dx)
      for (std::size_t c = 0; c < in; ++c) _mm256_storeu_pd(dx + c * n + i, dxa[c]);
  }
  for (std::size_t j = 0; j < n_w1; ++j) g.w1[j] += hsum(aw1[j]);
  for (std::size_t j = 0; j < H; ++j) g.b1[j] += hsum(ab1[j]);
  for (std::size_t j = 0; j < n_w2; ++j) g.w2[j] += hsum(aw2[j]);
  for (std::size_t j = 0; j < out; ++j) g.b2[j] += hsum(ab2[j]);

  if (nv == n) return;
  const std::size_t m = n - nv;
  std::vector<double> xs(in * m), ds(out * m), dxs(in * m);
  for (std::size_t c = 0; c < in; ++c)
    for (std::size_t j = 0; j < m; ++j) xs[c * m + j] = x[c * n + nv + j];
  const double* hs = hidden + nv * H;
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t j = 0; j < m; ++j) ds[o * m + j] = dy[o * n + nv + j];
  scalar_table().mlp_backward(w, xs.data(), hs, ds.data(), m, g, dx ? dxs.data() : nullptr);
  if (dx)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t j = 0; j < m; ++j) dx[c * n + nv + j] = dxs[c * m + j];
}

void mlp_forward(const MlpView& w, const double* x, std::size_t n, double* hidden, double* y) {
  if (w.in == 3 && w.out == 3) return mlp_forward_impl<3, 3>(w, x, n, hidden, y);
  if (w.in == 4 && w.out == 2) return mlp_forward_impl<4, 2>(w, x, n, hidden, y);
  mlp_forward_impl<0, 0>(w, x, n, hidden, y);
}

void mlp_backward(const MlpView& w, const double* x, const double* hidden, const double* dy,
                  std::size_t n, const MlpGrad& g, double* dx) {
  if (w.in == 3 && w.out == 3) return mlp_backward_impl<3, 3>(w, x, hidden, dy, n, g, dx);
  if (w.in == 4 && w.out == 2) return mlp_backward_impl<4, 2>(w, x, hidden, dy, n, g, dx);
  mlp_backward_impl<0, 0>(w, x, hidden, dy, n, g, dx);
}

void sigmoid(const double* z, std::size_t n, double* out) {
  const std::size_t nv = n - n % 4;
  for (std::size_t i = 0; i < nv; i += 4) _mm256_storeu_pd(out + i, sigmoid_pd(_mm256_loadu_pd(z + i)));
  if (nv < n) scalar_table().sigmoid(z + nv, n - nv, out + nv);
}

void exp_kernel(const double* z, std::size_t n, double* out) {
  const std::size_t nv = n - n % 4;
  const __m256d lo = _mm256_set1_pd(-708.0), hi = _mm256_set1_pd(709.0);
  for (std::size_t i = 0; i < nv; i += 4) {
    const __m256d v = _mm256_loadu_pd(z + i);
    // Overflow, subnormal results and NaN take the scalar path.
    const __m256d ok = _mm256_and_pd(_mm256_cmp_pd(v, lo, _CMP_GE_OQ), _mm256_cmp_pd(v, hi, _CMP_LE_OQ));
    if (_mm256_movemask_pd(ok) == 0xF)
      _mm256_storeu_pd(out + i, exp_pd(v));
    else
      scalar_table().exp(z + i, 4, out + i);
  }
  if (nv < n) scalar_table().exp(z + nv, n - nv, out + nv);
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::kAvx2, mlp_forward, mlp_backward, sigmoid, exp_kernel};
  return table;
}

}  // namespace lmlvamp::simd::detail
