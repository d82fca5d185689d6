#include "lmlvamp/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lmlvamp/spectrum.hpp"

namespace lmlvamp::frontend {

void QuantizerParams::validate() const {
  if (bits < 1 || bits > 30) throw Error("QuantizerParams: bits must be in [1, 30]");
  if (!(full_scale > 0.0) || !std::isfinite(full_scale))
    throw Error("QuantizerParams: full_scale must be positive");
}

void FrontEndParams::validate() const {
  if (!(p_sat > 0.0)) throw Error("FrontEndParams: p_sat must be positive");
  if (!(sigma_a2 >= 0.0) || !(sigma_b2 >= 0.0))
    throw Error("FrontEndParams: noise variances must be nonnegative");
  if (quantizer) quantizer->validate();
}

double soft_gain(double x) {
  if (!(x >= 0.0)) throw Error("soft_gain: argument must be nonnegative");
  if (x < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0;
  }
  return std::tanh(x) / x;
}

Complex saturate(Complex u, double p_sat) {
  const double root = std::sqrt(p_sat);
  return soft_gain(std::abs(u) / root) * u;
}

FrontEndOutput apply_frontend(std::span<const Complex> r, const FrontEndParams& params, Rng& rng) {
  params.validate();
  const std::size_t n = r.size();
  FrontEndOutput out{CVec(n), CVec(n), CVec(n), CVec(n), RVec(n)};
  const double root = std::sqrt(params.p_sat);
  for (std::size_t i = 0; i < n; ++i) {
    out.w_a[i] = spectrum::complex_normal(rng, params.sigma_a2);
    out.w_b[i] = spectrum::complex_normal(rng, params.sigma_b2);
    const Complex u = r[i] + out.w_a[i];
    out.gain[i] = soft_gain(std::abs(u) / root);
    out.y_raw[i] = out.gain[i] * u + out.w_b[i];
  }
  out.y = params.quantizer ? quantize(out.y_raw, *params.quantizer) : out.y_raw;
  return out;
}

namespace {

double level_index(double v, const QuantizerParams& q) {
  const double levels = std::ldexp(1.0, q.bits);
  const double k = std::floor((v + q.full_scale) / q.step());
  return std::clamp(k, 0.0, levels - 1.0);
}

}  // namespace

double quantize_component(double v, const QuantizerParams& q) {
  const double k = level_index(v, q);
  return (k + 0.5) * q.step() - q.full_scale;
}

CVec quantize(std::span<const Complex> y, const QuantizerParams& q) {
  q.validate();
  CVec out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = {quantize_component(y[i].real(), q), quantize_component(y[i].imag(), q)};
  return out;
}

std::pair<double, double> quantizer_cell(double v_q, const QuantizerParams& q) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double k = level_index(v_q, q);
  const double levels = std::ldexp(1.0, q.bits);
  const double lo = k == 0.0 ? -inf : k * q.step() - q.full_scale;
  const double hi = k == levels - 1.0 ? inf : (k + 1.0) * q.step() - q.full_scale;
  return {lo, hi};
}

double quantizer_full_scale(double backoff_db, double mean_input_power, double p_sat,
                            double sigma_a2, double sigma_b2) {
  const double out_power = std::min(mean_input_power + sigma_a2, p_sat) + sigma_b2;
  return std::sqrt(out_power / 2.0) * std::pow(10.0, backoff_db / 20.0);
}

}  // namespace lmlvamp::frontend
