#include "lmlvamp/metrics.hpp"

#include <algorithm>

namespace lmlvamp::metrics {

CVec linear_wiener(std::span<const Complex> y, const spectrum::PriorSpec& prior,
                   const frontend::FrontEndParams& fe, const spectrum::Dft& dft) {
  const std::size_t n = prior.n();
  if (y.size() != n) throw Error("linear_wiener: length mismatch");
  const CVec z = dft.forward(y);
  const double noise = fe.sigma_eff2();
  const spectrum::Band& b0 = prior.layout.band(0);
  CVec out(n);
  for (std::size_t i = b0.begin; i < b0.end; ++i) {
    const double denom = prior.s[i] + noise;
    const double gain = denom > 0.0 ? prior.s[i] / denom : 1.0;
    out[i] = prior.mu[i] + gain * (z[i] - prior.mu[i]);
  }
  return out;
}

CVec oracle_estimate(std::span<const Complex> y, std::span<const double> gain,
                     std::span<const Complex> x0_true, const spectrum::Band& band,
                     const spectrum::Dft& dft, bool per_bin) {
  const std::size_t n = y.size();
  if (x0_true.size() != n || (!gain.empty() && gain.size() != n))
    throw Error("oracle_estimate: length mismatch");
  CVec u(y.begin(), y.end());
  if (!gain.empty())
    for (std::size_t i = 0; i < n; ++i) {
      if (!(gain[i] > 0.0)) throw Error("oracle_estimate: non-positive gain at sample " + std::to_string(i));
      u[i] /= gain[i];
    }
  const CVec z = dft.forward(u);
  CVec out(n);
  if (per_bin) {
    for (std::size_t i = band.begin; i < band.end; ++i)
      out[i] = std::norm(z[i]) > 0.0 ? x0_true[i] : Complex{};
    return out;
  }
  Complex num{};
  double den = 0.0;
  for (std::size_t i = band.begin; i < band.end; ++i) {
    num += std::conj(z[i]) * x0_true[i];
    den += std::norm(z[i]);
  }
  if (den == 0.0) return out;
  const Complex a = num / den;
  for (std::size_t i = band.begin; i < band.end; ++i) out[i] = a * z[i];
  return out;
}

double correlation(std::span<const Complex> xhat0, std::span<const Complex> x0_true,
                   const spectrum::Band& band) {
  const double m = static_cast<double>(band.size());
  if (band.size() == 0) throw Error("correlation: empty band");
  Complex ma{}, mb{};
  for (std::size_t i = band.begin; i < band.end; ++i) {
    ma += xhat0[i];
    mb += x0_true[i];
  }
  ma /= m;
  mb /= m;
  Complex cross{};
  double va = 0.0, vb = 0.0;
  for (std::size_t i = band.begin; i < band.end; ++i) {
    const Complex a = xhat0[i] - ma, b = x0_true[i] - mb;
    cross += a * std::conj(b);
    va += std::norm(a);
    vb += std::norm(b);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return std::clamp(std::abs(cross) / std::sqrt(va * vb), 0.0, 1.0);
}

double rate_bound(double rho, RateFormula formula, double cap_bits) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error("rate_bound: rho outside [0, 1]");
  const double q = formula == RateFormula::kPrinted ? rho : rho * rho;
  if (q >= 1.0) return cap_bits;
  return std::min(cap_bits, -std::log2(1.0 - q));
}

double nmse(std::span<const Complex> xhat0, std::span<const Complex> x0_true,
            const spectrum::Band& band) {
  double err = 0.0, ref = 0.0;
  for (std::size_t i = band.begin; i < band.end; ++i) {
    err += std::norm(xhat0[i] - x0_true[i]);
    ref += std::norm(x0_true[i]);
  }
  if (ref == 0.0) throw Error("nmse: true signal is zero on the band");
  return err / ref;
}

double nmse_to_db(double v) {
  if (!(v > 0.0)) return kNmseFloorDb;
  return std::max(kNmseFloorDb, linear_to_db(v));
}

Evaluation evaluate(std::span<const Complex> xhat0, std::span<const Complex> x0_true,
                    const spectrum::Band& band, RateFormula formula, double cap_bits) {
  if (xhat0.size() != x0_true.size() || band.end > x0_true.size())
    throw Error("evaluate: length mismatch");
  Evaluation e;
  e.rho = correlation(xhat0, x0_true, band);
  e.rate_bound = rate_bound(e.rho, formula, cap_bits);
  e.nmse = nmse(xhat0, x0_true, band);
  e.nmse_db = nmse_to_db(e.nmse);
  return e;
}

}  // namespace lmlvamp::metrics
