#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "lmlvamp/metrics.hpp"

using namespace lmlvamp;
using namespace testing;

TEST_SUITE("metrics") {

TEST_CASE("correlation is invariant to complex scaling and offset") {
  Rng rng(81);
  const spectrum::Band band{4, 36};
  const CVec x = random_cvec(40, rng);
  CVec y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = Complex(-0.3, 2.0) * x[i] + Complex(5.0, 1.0);
  CHECK(metrics::correlation(y, x, band) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(metrics::correlation(CVec(40), x, band) == 0.0);
}

TEST_CASE("correlation of independent noise is small") {
  Rng rng(82);
  const spectrum::Band band{0, 4000};
  const CVec a = random_cvec(4000, rng), b = random_cvec(4000, rng);
  CHECK(metrics::correlation(a, b, band) < 0.05);
}

TEST_CASE("correlation against a direct formula") {
  Rng rng(83);
  const spectrum::Band band{0, 16};
  const CVec a = random_cvec(16, rng), b = random_cvec(16, rng);
  CVec mixed(16);
  for (std::size_t i = 0; i < 16; ++i) mixed[i] = a[i] + 0.5 * b[i];
  Complex ma{}, mb{};
  for (std::size_t i = 0; i < 16; ++i) {
    ma += mixed[i] / 16.0;
    mb += a[i] / 16.0;
  }
  Complex c{};
  double va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    c += (mixed[i] - ma) * std::conj(a[i] - mb);
    va += std::norm(mixed[i] - ma);
    vb += std::norm(a[i] - mb);
  }
  CHECK(metrics::correlation(mixed, a, band) == doctest::Approx(std::abs(c) / std::sqrt(va * vb)));
}

TEST_CASE("rate bound formulas and cap") {
  CHECK(metrics::rate_bound(0.0) == 0.0);
  CHECK(metrics::rate_bound(0.5) == doctest::Approx(1.0));
  CHECK(metrics::rate_bound(0.75) == doctest::Approx(2.0));
  CHECK(metrics::rate_bound(0.5, metrics::RateFormula::kSquared) ==
        doctest::Approx(-std::log2(0.75)));
  CHECK(metrics::rate_bound(1.0) == metrics::kDefaultRateCapBits);
  CHECK(metrics::rate_bound(1.0 - 1e-12, metrics::RateFormula::kPrinted, 12.0) == 12.0);
  CHECK_THROWS_AS(metrics::rate_bound(-0.1), Error);
  CHECK_THROWS_AS(metrics::rate_bound(1.1), Error);
  CHECK_THROWS_AS(metrics::rate_bound(std::nan("")), Error);
  // Monotone in rho for both formulas.
  double prev_a = -1.0, prev_b = -1.0;
  for (double r = 0.0; r < 1.0; r += 0.01) {
    const double a = metrics::rate_bound(r), b = metrics::rate_bound(r, metrics::RateFormula::kSquared);
    CHECK(a >= prev_a);
    CHECK(b >= prev_b);
    prev_a = a;
    prev_b = b;
  }
}

TEST_CASE("nmse and its dB floor") {
  const spectrum::Band band{0, 2};
  const CVec x{{1.0, 0.0}, {0.0, 1.0}, {9.0, 9.0}};
  const CVec xh{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  CHECK(metrics::nmse(xh, x, band) == doctest::Approx(0.5));
  CHECK(metrics::nmse(x, x, band) == 0.0);
  CHECK(metrics::nmse_to_db(0.0) == metrics::kNmseFloorDb);
  CHECK(metrics::nmse_to_db(0.1) == doctest::Approx(-10.0));
  CHECK_THROWS_AS(metrics::nmse(xh, CVec(3), band), Error);
}

TEST_CASE("linear baseline matches the written-out Wiener filter on band 0") {
  Rng rng(84);
  const spectrum::BandLayout layout(64, {{0, 16}, {32, 48}});
  const spectrum::Dft dft(64);
  for (bool known : {false, true}) {
    const auto prior = spectrum::prior_from_ratios(layout, 10.0, 1000.0, 1.0, known, rng);
    const CVec y = random_cvec(64, rng, 30.0);
    frontend::FrontEndParams fe;
    fe.sigma_a2 = 1.0;
    fe.sigma_b2 = 0.1;
    const CVec got = metrics::linear_wiener(y, prior, fe, dft);
    const CVec want = wiener_reference(y, prior, 1.1);
    for (std::size_t i = 0; i < 64; ++i) {
      if (i < 16)
        CHECK(std::abs(got[i] - want[i]) < 1e-10 * (1.0 + std::abs(want[i])));
      else
        CHECK(got[i] == Complex{});
    }
  }
}

TEST_CASE("oracle with identity gain is the least-squares scaled spectrum") {
  Rng rng(85);
  const spectrum::Dft dft(32);
  const spectrum::Band band{0, 8};
  const CVec y = random_cvec(32, rng), x0 = random_cvec(32, rng);
  const CVec est = metrics::oracle_estimate(y, {}, x0, band, dft);
  const CVec z = naive_dft(y, false);
  // Residual of the least-squares fit is orthogonal to z.
  Complex inner{};
  for (std::size_t i = 0; i < 8; ++i) inner += std::conj(z[i]) * (x0[i] - est[i]);
  CHECK(std::abs(inner) < 1e-10);
  for (std::size_t i = 8; i < 32; ++i) CHECK(est[i] == Complex{});
  // Correlation equals that of the raw spectrum.
  CHECK(metrics::correlation(est, x0, band) == doctest::Approx(metrics::correlation(z, x0, band)));
}

TEST_CASE("oracle divides out the known compression") {
  Rng rng(86);
  const spectrum::Dft dft(32);
  const spectrum::Band band{0, 8};
  CVec x(32);
  for (std::size_t i = 0; i < 8; ++i) x[i] = spectrum::complex_normal(rng, 1.0);
  const CVec r = naive_dft(x, true);
  RVec gain(32);
  CVec y(32);
  for (std::size_t i = 0; i < 32; ++i) {
    gain[i] = rng.uniform(0.1, 1.0);
    y[i] = gain[i] * r[i];
  }
  const CVec est = metrics::oracle_estimate(y, gain, x, band, dft);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(est[i] - x[i]) < 1e-12);
  CHECK_THROWS_AS(metrics::oracle_estimate(y, RVec(3, 1.0), x, band, dft), Error);
  const CVec per_bin = metrics::oracle_estimate(y, gain, x, band, dft, true);
  for (std::size_t i = 0; i < 8; ++i) CHECK(per_bin[i] == x[i]);
}

TEST_CASE("evaluate bundles the metrics") {
  Rng rng(87);
  const spectrum::Band band{0, 20};
  const CVec x = random_cvec(20, rng);
  CVec xh = x;
  for (auto& v : xh) v += spectrum::complex_normal(rng, 0.1);
  const auto e = metrics::evaluate(xh, x, band);
  CHECK(e.rho == metrics::correlation(xh, x, band));
  CHECK(e.rate_bound == metrics::rate_bound(e.rho));
  CHECK(e.nmse_db == doctest::Approx(10.0 * std::log10(e.nmse)));
  CHECK_THROWS_AS(metrics::evaluate(xh, CVec(10), band), Error);
}

}  // TEST_SUITE
