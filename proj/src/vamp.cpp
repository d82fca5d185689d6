#include "lmlvamp/vamp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace lmlvamp::vamp {

using spectrum::PriorSpec;

SpectralEstimate spectral_denoise(std::span<const Complex> z0, double gamma0,
                                  const PriorSpec& prior) {
  if (!(gamma0 >= 0.0)) throw Error("spectral_denoise: gamma0 must be nonnegative");
  const std::size_t n = prior.n();
  if (z0.size() != n) throw Error("spectral_denoise: z0 length differs from prior");
  SpectralEstimate est{CVec(n), 0.0};
  double gain_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gs = gamma0 * prior.s[i];
    const double gain = std::isinf(gamma0) ? (prior.s[i] > 0.0 ? 1.0 : 0.0) : gs / (1.0 + gs);
    est.xhat[i] = prior.mu[i] + gain * (z0[i] - prior.mu[i]);
    gain_sum += gain;
  }
  est.alpha0 = gain_sum / static_cast<double>(n);
  return est;
}

double spectral_divergence_fd(std::span<const Complex> z0, double gamma0, const PriorSpec& prior) {
  const std::size_t n = prior.n();
  CVec probe(z0.begin(), z0.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = 1e-3 * (1.0 + std::abs(z0[i]));
    probe[i] = z0[i] + h;
    const double plus = spectral_denoise(probe, gamma0, prior).xhat[i].real();
    probe[i] = z0[i] - h;
    const double minus = spectral_denoise(probe, gamma0, prior).xhat[i].real();
    probe[i] = z0[i];
    total += (plus - minus) / (2.0 * h);
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Quadrature oracle

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log Q(t), Q the standard normal upper tail.
double log_upper_tail(double t) {
  if (t < 30.0) return std::log(0.5 * std::erfc(t / std::numbers::sqrt2));
  const double t2 = t * t;
  return -0.5 * t2 - std::log(t) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(-1.0 / t2 + 3.0 / (t2 * t2));
}

// log P(a < Z < b) for standard normal Z, a < b.
double log_interval(double a, double b) {
  if (a >= 0.0) {
    const double la = log_upper_tail(a);
    if (b == kInf) return la;
    const double lb = log_upper_tail(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b <= 0.0) return log_interval(-b, -a);
  const double qa = a == -kInf ? 0.0 : 0.5 * std::erfc(-a / std::numbers::sqrt2);
  const double qb = b == kInf ? 0.0 : 0.5 * std::erfc(b / std::numbers::sqrt2);
  return std::log(1.0 - qa - qb);
}

inline double gain_of(double x) {
  if (x < 1e-4) return 1.0 - x * x / 3.0;
  return std::tanh(x) / x;
}

struct Sym2 {
  double xx = 0.0, xy = 0.0, yy = 0.0;
};

// Eigen-decomposition of a symmetric 2x2 matrix.
void eig2(const Sym2& c, std::array<double, 2>& lam, std::array<std::array<double, 2>, 2>& vec) {
  const double tr = c.xx + c.yy;
  const double diff = 0.5 * (c.xx - c.yy);
  const double rad = std::hypot(diff, c.xy);
  lam = {0.5 * tr + rad, 0.5 * tr - rad};
  const double theta = 0.5 * std::atan2(2.0 * c.xy, c.xx - c.yy);
  vec[0] = {std::cos(theta), std::sin(theta)};
  vec[1] = {-std::sin(theta), std::cos(theta)};
}

class Likelihood {
 public:
  Likelihood(Complex y, const frontend::FrontEndParams& fe) : y_(y), root_(std::sqrt(fe.p_sat)) {
    if (fe.quantizer) {
      quantized_ = true;
      const double sb2 = std::max(fe.sigma_b2, 1e-12 * fe.p_sat);
      sigma_ = std::sqrt(sb2 / 2.0);
      std::tie(lo_re_, hi_re_) = frontend::quantizer_cell(y.real(), *fe.quantizer);
      std::tie(lo_im_, hi_im_) = frontend::quantizer_cell(y.imag(), *fe.quantizer);
    } else {
      inv_sb2_ = 1.0 / fe.sigma_b2;
    }
  }

  double log(double ux, double uy) const {
    const double g = gain_of(std::hypot(ux, uy) / root_);
    const double sx = g * ux, sy = g * uy;
    if (!quantized_) {
      const double dx = y_.real() - sx, dy = y_.imag() - sy;
      return -(dx * dx + dy * dy) * inv_sb2_;
    }
    return log_interval((lo_re_ - sx) / sigma_, (hi_re_ - sx) / sigma_) +
           log_interval((lo_im_ - sy) / sigma_, (hi_im_ - sy) / sigma_);
  }

 private:
  Complex y_;
  double root_;
  bool quantized_ = false;
  double inv_sb2_ = 0.0;
  double sigma_ = 0.0;
  double lo_re_ = 0, hi_re_ = 0, lo_im_ = 0, hi_im_ = 0;
};

struct GridMoments {
  double mx, my;
  Sym2 cov;
};

}  // namespace

PosteriorMoments nonlinear_denoise_oracle(Complex z1, double gamma1, Complex y,
                                          const frontend::FrontEndParams& fe,
                                          const QuadratureConfig& cfg) {
  if (!(gamma1 > 0.0) || !std::isfinite(gamma1))
    throw Error("nonlinear_denoise_oracle: gamma1 must be positive and finite");
  fe.validate();
  const double prior_var = 1.0 / gamma1;       // r ~ CN(z1, prior_var)
  const double u_var = prior_var + fe.sigma_a2;  // u = r + w_a
  const double k = prior_var / u_var;          // E[r | u] = z1 + k (u - z1)
  const double cond_var = prior_var * (1.0 - k);

  auto finish = [&](Complex u_mean, double u_var_post, int passes) {
    return PosteriorMoments{z1 + k * (u_mean - z1), cond_var + k * k * u_var_post, passes};
  };

  if (!fe.quantizer && fe.sigma_b2 == 0.0) {
    // Noiseless output: u is pinned by inverting the saturation.
    const double root = std::sqrt(fe.p_sat);
    const double mag = std::abs(y);
    if (mag >= root)
      throw Error("nonlinear_denoise_oracle: |y| >= sqrt(P_sat) is impossible with sigma_b2 = 0");
    const double inv = mag > 0.0 ? root * std::atanh(mag / root) / mag : 1.0;
    return finish(inv * y, 0.0, 0);
  }

  const Likelihood lik(y, fe);
  const int m = cfg.nodes;
  std::vector<double> logw(static_cast<std::size_t>(m) * m);

  double cx = z1.real(), cy = z1.imag();
  Sym2 box{u_var / 2.0, 0.0, u_var / 2.0};
  GridMoments est{};
  for (int pass = 1; pass <= cfg.max_passes; ++pass) {
    std::array<double, 2> lam;
    std::array<std::array<double, 2>, 2> ax;
    eig2(box, lam, ax);
    const double h0 = cfg.span * std::sqrt(std::max(lam[0], 0.0));
    const double h1 = cfg.span * std::sqrt(std::max(lam[1], 0.0));

    double best = -kInf;
    for (int a = 0; a < m; ++a) {
      const double ta = h0 * (-1.0 + (2.0 * a + 1.0) / m);
      for (int b = 0; b < m; ++b) {
        const double tb = h1 * (-1.0 + (2.0 * b + 1.0) / m);
        const double ux = cx + ta * ax[0][0] + tb * ax[1][0];
        const double uy = cy + ta * ax[0][1] + tb * ax[1][1];
        const double dx = ux - z1.real(), dy = uy - z1.imag();
        const double lw = -(dx * dx + dy * dy) / u_var + lik.log(ux, uy);
        logw[static_cast<std::size_t>(a) * m + b] = lw;
        if (lw > best) best = lw;
      }
    }
    if (!std::isfinite(best)) {
      std::ostringstream os;
      os << "nonlinear_denoise_oracle: no finite posterior weight (pass " << pass << ", z1=" << z1
         << ", gamma1=" << gamma1 << ", y=" << y << ")";
      throw Error(os.str());
    }

    // Moments relative to the box centre.
    double w_sum = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int a = 0; a < m; ++a) {
      const double ta = h0 * (-1.0 + (2.0 * a + 1.0) / m);
      for (int b = 0; b < m; ++b) {
        const double w = std::exp(logw[static_cast<std::size_t>(a) * m + b] - best);
        if (w == 0.0) continue;
        const double tb = h1 * (-1.0 + (2.0 * b + 1.0) / m);
        const double ox = ta * ax[0][0] + tb * ax[1][0];
        const double oy = ta * ax[0][1] + tb * ax[1][1];
        w_sum += w;
        sx += w * ox;
        sy += w * oy;
        sxx += w * ox * ox;
        sxy += w * ox * oy;
        syy += w * oy * oy;
      }
    }
    if (!(w_sum > 0.0) || !std::isfinite(w_sum)) {
      std::ostringstream os;
      os << "nonlinear_denoise_oracle: degenerate normalizer " << w_sum << " (pass " << pass
         << ")";
      throw Error(os.str());
    }
    const double ox = sx / w_sum, oy = sy / w_sum;
    est.mx = cx + ox;
    est.my = cy + oy;
    est.cov = {sxx / w_sum - ox * ox, sxy / w_sum - ox * oy, syy / w_sum - oy * oy};
    est.cov.xx = std::max(est.cov.xx, 0.0);
    est.cov.yy = std::max(est.cov.yy, 0.0);

    // Accept once the box already matched the posterior it produced: centre
    // within half a box-sigma and sigmas within roughly +/-18%.
    const double det = box.xx * box.yy - box.xy * box.xy;
    const Sym2 inv{box.yy / det, -box.xy / det, box.xx / det};
    const double d2 = ox * (inv.xx * ox + inv.xy * oy) + oy * (inv.xy * ox + inv.yy * oy);
    // Eigenvalues of box^{-1} cov.
    const double p = inv.xx * est.cov.xx + inv.xy * est.cov.xy;
    const double q = inv.xx * est.cov.xy + inv.xy * est.cov.yy;
    const double r = inv.xy * est.cov.xx + inv.yy * est.cov.xy;
    const double s = inv.xy * est.cov.xy + inv.yy * est.cov.yy;
    const double tr = p + s, dt = p * s - q * r;
    const double rad = std::sqrt(std::max(tr * tr / 4.0 - dt, 0.0));
    const double lmax = tr / 2.0 + rad, lmin = tr / 2.0 - rad;
    if (d2 <= 0.25 && lmin >= 0.7 && lmax <= 1.4)
      return finish({est.mx, est.my}, est.cov.xx + est.cov.yy, pass);

    // Next box: posterior covariance plus a floor of 1.5 current cells per
    // axis, so an unresolved peak zooms in by about m / 3 per pass.
    const double f0 = std::pow(1.5 * 2.0 * h0 / m / cfg.span, 2);
    const double f1 = std::pow(1.5 * 2.0 * h1 / m / cfg.span, 2);
    box.xx = est.cov.xx + f0 * ax[0][0] * ax[0][0] + f1 * ax[1][0] * ax[1][0];
    box.xy = est.cov.xy + f0 * ax[0][0] * ax[0][1] + f1 * ax[1][0] * ax[1][1];
    box.yy = est.cov.yy + f0 * ax[0][1] * ax[0][1] + f1 * ax[1][1] * ax[1][1];
    cx = est.mx;
    cy = est.my;
  }
  return finish({est.mx, est.my}, est.cov.xx + est.cov.yy, cfg.max_passes);
}

// ---------------------------------------------------------------------------

namespace {

double clamp_alpha(double a, int& events) {
  if (a < kAlphaMin || a > kAlphaMax || !std::isfinite(a)) {
    ++events;
    return std::isfinite(a) ? std::clamp(a, kAlphaMin, kAlphaMax) : 0.5;
  }
  return a;
}

}  // namespace

VampState initial_state(const PriorSpec& prior) {
  VampState st;
  const std::size_t n = prior.n();
  st.z0.assign(n, Complex{});
  st.z1.assign(n, Complex{});
  st.rhat.assign(n, Complex{});
  st.xhat = prior.mu;
  return st;
}

VampState mlvamp_step(const VampState& state, const PriorSpec& prior,
                      const frontend::FrontEndParams& fe, std::span<const Complex> y,
                      const spectrum::Dft& dft, const QuadratureConfig& cfg) {
  const std::size_t n = prior.n();
  if (y.size() != n || dft.n() != n || state.z0.size() != n)
    throw Error("mlvamp_step: length mismatch");
  VampState next = state;
  next.iteration = state.iteration + 1;

  // Frequency-domain denoiser and message to the time domain.
  const SpectralEstimate g0 = spectral_denoise(state.z0, state.gamma0, prior);
  next.alpha0 = g0.alpha0;
  if (state.gamma0 == 0.0) {
    // gamma0 -> 0 limit: alpha0 ~ gamma0 <S>, so gamma1 -> 1/<S> and the
    // message is the prior mean.
    next.z1 = dft.inverse(prior.mu);
    next.gamma1 = 1.0 / prior.mean_variance();
  } else {
    const double a0 = clamp_alpha(g0.alpha0, next.clamp_events);
    CVec diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = (g0.xhat[i] - a0 * state.z0[i]) / (1.0 - a0);
    next.z1 = dft.inverse(diff);
    next.gamma1 = state.gamma0 * (1.0 / a0 - 1.0);
  }

  // Time-domain denoiser, sample by sample.
  double var_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const PosteriorMoments pm = nonlinear_denoise_oracle(next.z1[i], next.gamma1, y[i], fe, cfg);
    next.rhat[i] = pm.mean;
    var_sum += pm.variance;
  }
  next.alpha1 = next.gamma1 * var_sum / static_cast<double>(n);
  const double a1 = clamp_alpha(next.alpha1, next.clamp_events);

  CVec diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = (next.rhat[i] - a1 * next.z1[i]) / (1.0 - a1);
  next.z0 = dft.forward(diff);
  next.gamma0 = next.gamma1 * (1.0 / a1 - 1.0);
  next.xhat = spectral_denoise(next.z0, next.gamma0, prior).xhat;
  return next;
}

}  // namespace lmlvamp::vamp
