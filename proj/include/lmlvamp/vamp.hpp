#pragma once

#include <span>

#include "lmlvamp/common.hpp"
#include "lmlvamp/frontend.hpp"
#include "lmlvamp/spectrum.hpp"

namespace lmlvamp::vamp {

// Bayesian ML-VAMP reference path. The nonlinear denoiser here is a
// numerical quadrature and is orders of magnitude slower than the learned
// path; it exists to check the learned pieces and for small-N studies.

inline constexpr double kAlphaMin = 1e-6;
inline constexpr double kAlphaMax = 1.0 - 1e-6;

struct SpectralEstimate {
  CVec xhat;
  double alpha0 = 0.0;
};

// Per-bin Wiener shrinkage toward mu with gain gamma0 S / (1 + gamma0 S).
SpectralEstimate spectral_denoise(std::span<const Complex> z0, double gamma0,
                                  const spectrum::PriorSpec& prior);

// Central finite-difference estimate of (1/N) sum_i d Re xhat[i] / d Re z0[i].
double spectral_divergence_fd(std::span<const Complex> z0, double gamma0,
                              const spectrum::PriorSpec& prior);

struct QuadratureConfig {
  int nodes = 65;          // per axis
  double span = 8.0;       // half-width of the grid in posterior standard deviations
  int max_passes = 40;
};

struct PosteriorMoments {
  Complex mean;
  double variance = 0.0;  // E|r - mean|^2 given y
  int passes = 0;
};

// E[r | y] and its variance for r ~ CN(z1, 1/gamma1), y = phi(r, w), or its
// quantized version when fe.quantizer is set (y then names a reconstruction
// level and the likelihood integrates over its cell).
//
// The pre-saturation noise is integrated in closed form: u = r + w_a is
// Gaussian given z1, and r | u is Gaussian. What remains is a 2-D integral
// over u, done with a midpoint rule on a grid aligned to the posterior's
// principal axes and refined until the box matches the posterior moments.
PosteriorMoments nonlinear_denoise_oracle(Complex z1, double gamma1, Complex y,
                                          const frontend::FrontEndParams& fe,
                                          const QuadratureConfig& cfg = {});

struct VampState {
  CVec z0;       // frequency-domain message
  CVec z1;       // time-domain message
  CVec xhat;     // G0 of the latest z0
  CVec rhat;
  double gamma0 = 0.0;
  double gamma1 = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  int iteration = 0;
  int clamp_events = 0;  // divergences pushed back into (kAlphaMin, kAlphaMax)
};

// z0 = 0, gamma0 = 0, xhat = mu.
VampState initial_state(const spectrum::PriorSpec& prior);

// One ML-VAMP round: G0, Onsager message to the time domain, per-sample G1,
// message back to the frequency domain, then G0 of the new message.
VampState mlvamp_step(const VampState& state, const spectrum::PriorSpec& prior,
                      const frontend::FrontEndParams& fe, std::span<const Complex> y,
                      const spectrum::Dft& dft, const QuadratureConfig& cfg = {});

}  // namespace lmlvamp::vamp
