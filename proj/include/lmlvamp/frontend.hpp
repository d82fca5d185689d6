#pragma once

#include <optional>
#include <span>
#include <utility>

#include "lmlvamp/common.hpp"
#include "lmlvamp/rng.hpp"

namespace lmlvamp::frontend {

// Uniform mid-rise quantizer applied separately to I and Q: 2^bits levels
// spanning [-full_scale, +full_scale].
struct QuantizerParams {
  int bits = 10;
  double backoff_db = 12.0;
  double full_scale = 1.0;

  double step() const { return 2.0 * full_scale / std::ldexp(1.0, bits); }
  void validate() const;
};

struct FrontEndParams {
  double p_sat = 1.0;
  double sigma_a2 = 0.0;  // before saturation
  double sigma_b2 = 0.0;  // after saturation
  std::optional<QuantizerParams> quantizer;

  void validate() const;
  double sigma_eff2() const { return sigma_a2 + sigma_b2; }
};

struct FrontEndOutput {
  CVec y;      // saturated + noisy output (quantized when a quantizer is set)
  CVec y_raw;  // same, before quantization
  CVec w_a;
  CVec w_b;
  RVec gain;   // per-sample compression f(|r + w_a| / sqrt(P_sat))
};

// tanh(x)/x with the removable singularity at 0.
double soft_gain(double x);

// sqrt(P) tanh(|u|/sqrt(P)) e^{j arg u}
Complex saturate(Complex u, double p_sat);

FrontEndOutput apply_frontend(std::span<const Complex> r, const FrontEndParams& params, Rng& rng);

double quantize_component(double v, const QuantizerParams& q);
CVec quantize(std::span<const Complex> y, const QuantizerParams& q);

// Input interval mapped to the reconstruction level of `v_q`; the outermost
// cells extend to +/- infinity.
std::pair<double, double> quantizer_cell(double v_q, const QuantizerParams& q);

// Full scale for a given backoff, referenced to the per-component RMS of the
// front-end output estimated as min(P_in + sigma_a2, P_sat) + sigma_b2.
double quantizer_full_scale(double backoff_db, double mean_input_power, double p_sat,
                            double sigma_a2, double sigma_b2);

}  // namespace lmlvamp::frontend
