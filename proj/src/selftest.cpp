#include "lmlvamp/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "lmlvamp/frontend.hpp"
#include "lmlvamp/neural.hpp"
#include "lmlvamp/rng.hpp"
#include "lmlvamp/spectrum.hpp"
#include "lmlvamp/tape.hpp"
#include "lmlvamp/vamp.hpp"

namespace lmlvamp::harness {

namespace {

CheckResult check(const std::string& name, double err, double tol) {
  std::ostringstream os;
  os << "error " << err << " (tolerance " << tol << ")";
  return {name, std::isfinite(err) && err <= tol, os.str()};
}

CVec random_cvec(std::size_t n, Rng& rng) {
  CVec v(n);
  for (auto& c : v) c = spectrum::complex_normal(rng, 1.0);
  return v;
}

CheckResult dft_unitarity() {
  Rng rng(11);
  const spectrum::Dft dft(512);
  const CVec x = random_cvec(512, rng);
  const CVec back = dft.forward(dft.inverse(x));
  double err = 0.0, nx = 0.0, nf = 0.0;
  const CVec f = dft.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    err = std::max(err, std::abs(back[i] - x[i]));
    nx += std::norm(x[i]);
    nf += std::norm(f[i]);
  }
  err = std::max(err, std::abs(std::sqrt(nf) - std::sqrt(nx)) / std::sqrt(nx));
  return check("dft unitarity", err, 1e-12);
}

CheckResult soft_gain_series() {
  double err = 0.0;
  for (double x : {1e-9, 1e-6, 5e-5, 9.99e-5, 1e-4, 1.01e-4, 1e-3, 0.5, 3.0}) {
    const long double lx = x;
    const long double ref = std::tanh(lx) / lx;
    err = std::max(err, static_cast<double>(std::fabs((frontend::soft_gain(x) - ref) / ref)));
  }
  return check("soft_gain accuracy", err, 1e-14);
}

CheckResult quantizer_idempotence() {
  frontend::QuantizerParams q;
  q.bits = 6;
  q.full_scale = 2.0;
  Rng rng(12);
  double err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double v = rng.uniform(-3.0, 3.0);
    const double once = frontend::quantize_component(v, q);
    err = std::max(err, std::abs(frontend::quantize_component(once, q) - once));
  }
  return check("quantizer idempotence", err, 0.0);
}

CheckResult spectral_divergence() {
  Rng rng(13);
  const spectrum::BandLayout layout(32, {{0, 8}, {16, 24}});
  const auto prior = spectrum::prior_from_ratios(layout, 10.0, 100.0, 1.0, false, rng);
  const CVec z0 = random_cvec(32, rng);
  const double gamma0 = 0.3;
  const double analytic = vamp::spectral_denoise(z0, gamma0, prior).alpha0;
  const double fd = vamp::spectral_divergence_fd(z0, gamma0, prior);
  return check("spectral divergence", std::abs(analytic - fd) / std::abs(analytic), 1e-6);
}

CheckResult autodiff_mlp() {
  Rng rng(14);
  const std::size_t n = 5, in = 3, hidden = 7, out = 2;
  RVec x(in * n), w1(hidden * in), b1(hidden), w2(out * hidden), b2(out);
  for (auto* v : {&x, &w1, &b1, &w2, &b2})
    for (auto& d : *v) d = rng.normal();
  auto loss_of = [&](const RVec& w1v) {
    nn::Tape tape;
    const auto pw1 = tape.parameter(w1v);
    const auto y = tape.mlp(pw1, tape.constant(b1), tape.constant(w2), tape.constant(b2),
                            tape.constant(x), in, hidden, out);
    const auto loss = tape.sum(tape.mul(y, y));
    tape.backward(loss);
    return std::make_pair(tape.scalar(loss), tape.grad(pw1));
  };
  const auto [l0, grad] = loss_of(w1);
  double err = 0.0;
  for (std::size_t k = 0; k < w1.size(); ++k) {
    RVec plus = w1, minus = w1;
    const double h = 1e-5;
    plus[k] += h;
    minus[k] -= h;
    const double fd = (loss_of(plus).first - loss_of(minus).first) / (2 * h);
    err = std::max(err, std::abs(fd - grad[k]) / std::max(1e-3, std::abs(fd)));
  }
  return check("autodiff vs finite differences", err, 1e-5);
}

CheckResult quadrature_linear_limit() {
  frontend::FrontEndParams fe;
  fe.p_sat = 1e14;
  fe.sigma_a2 = 0.4;
  fe.sigma_b2 = 0.1;
  const Complex z1{0.7, -0.2}, y{1.3, 0.4};
  const double gamma1 = 2.0;
  const auto m = vamp::nonlinear_denoise_oracle(z1, gamma1, y, fe);
  const double v = 1.0 / gamma1, s2 = fe.sigma_eff2();
  const Complex mean = z1 + v / (v + s2) * (y - z1);
  const double var = v * s2 / (v + s2);
  const double err =
      std::max(std::abs(m.mean - mean) / std::abs(mean), std::abs(m.variance - var) / var);
  return check("quadrature linear limit", err, 1e-3);
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  std::vector<std::function<CheckResult()>> checks{dft_unitarity,       soft_gain_series,
                                                   quantizer_idempotence, spectral_divergence,
                                                   autodiff_mlp,        quadrature_linear_limit};
  std::vector<CheckResult> out;
  for (const auto& c : checks) {
    try {
      out.push_back(c());
    } catch (const std::exception& e) {
      out.push_back({"(check threw)", false, e.what()});
    }
  }
  return out;
}

}  // namespace lmlvamp::harness
