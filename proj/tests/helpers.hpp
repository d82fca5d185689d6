#pragma once

#include <algorithm>
#include <cmath>

#include "lmlvamp/common.hpp"
#include "lmlvamp/rng.hpp"
#include "lmlvamp/spectrum.hpp"

namespace testing {

using namespace lmlvamp;

inline CVec random_cvec(std::size_t n, Rng& rng, double var = 1.0) {
  CVec v(n);
  for (auto& c : v) c = spectrum::complex_normal(rng, var);
  return v;
}

inline double max_abs_diff(const CVec& a, const CVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// Direct O(N^2) unitary DFT, independent of the library transform.
inline CVec naive_dft(const CVec& r, bool inverse) {
  const std::size_t n = r.size();
  const double sign = inverse ? 1.0 : -1.0;
  CVec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * M_PI * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += r[t] * Complex(std::cos(ang), std::sin(ang));
    }
    out[k] = acc / std::sqrt(static_cast<double>(n));
  }
  return out;
}

}  // namespace testing
