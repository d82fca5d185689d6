#pragma once

#include <span>
#include <string>

#include "lmlvamp/common.hpp"
#include "lmlvamp/frontend.hpp"
#include "lmlvamp/spectrum.hpp"

namespace lmlvamp::metrics {

inline constexpr double kDefaultRateCapBits = 30.0;
inline constexpr double kNmseFloorDb = -150.0;

enum class RateFormula {
  kPrinted,  // -log2(1 - rho)
  kSquared,  // -log2(1 - rho^2)
};

struct TrialResult {
  std::string estimator;
  double snr_db = 0.0;
  double inr_db = 0.0;
  int t_iters = 0;
  bool quantized = false;
  double rho = 0.0;
  double rate_bound = 0.0;  // bits
  double nmse = 0.0;        // linear
  double nmse_db = 0.0;     // floored
  std::uint64_t seed = 0;
};

// Wiener filter that models the front end as identity plus white noise of
// variance sigma_a2 + sigma_b2. Output is zero off band 0.
CVec linear_wiener(std::span<const Complex> y, const spectrum::PriorSpec& prior,
                   const frontend::FrontEndParams& fe, const spectrum::Dft& dft);

// Genie estimator. `gain` is the per-sample compression the front end
// applied (empty means none); it is divided out of y before the DFT. The
// band-0 spectrum is then scaled by the least-squares gain against x0_true,
// one complex scalar per trial or, with per_bin, one per bin.
CVec oracle_estimate(std::span<const Complex> y, std::span<const double> gain,
                     std::span<const Complex> x0_true, const spectrum::Band& band,
                     const spectrum::Dft& dft, bool per_bin = false);

// Magnitude of the empirical correlation coefficient over the bins of `band`.
double correlation(std::span<const Complex> xhat0, std::span<const Complex> x0_true,
                   const spectrum::Band& band);
double rate_bound(double rho, RateFormula formula = RateFormula::kPrinted,
                  double cap_bits = kDefaultRateCapBits);
// ||xhat0 - x0||^2 / ||x0||^2 over `band`; throws if x0 vanishes there.
double nmse(std::span<const Complex> xhat0, std::span<const Complex> x0_true,
            const spectrum::Band& band);
double nmse_to_db(double nmse);

struct Evaluation {
  double rho = 0.0;
  double rate_bound = 0.0;
  double nmse = 0.0;
  double nmse_db = 0.0;
};

Evaluation evaluate(std::span<const Complex> xhat0, std::span<const Complex> x0_true,
                    const spectrum::Band& band, RateFormula formula = RateFormula::kPrinted,
                    double cap_bits = kDefaultRateCapBits);

}  // namespace lmlvamp::metrics
