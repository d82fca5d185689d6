#include <doctest.h>

#include <limits>

#include "helpers.hpp"
#include "lmlvamp/simd.hpp"

using namespace lmlvamp;
using namespace testing;

namespace {

struct Net {
  std::size_t in, hidden, out;
  RVec w1, b1, w2, b2;
  simd::MlpView view() const { return {in, hidden, out, w1.data(), b1.data(), w2.data(), b2.data()}; }
};

Net random_net(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Net n{in, hidden, out, RVec(hidden * in), RVec(hidden), RVec(out * hidden), RVec(out)};
  for (auto* v : {&n.w1, &n.b1, &n.w2, &n.b2})
    for (auto& d : *v) d = rng.normal();
  return n;
}

RVec random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  RVec v(n);
  for (auto& d : v) d = scale * rng.normal();
  return v;
}

double max_rel(const RVec& a, const RVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return m;
}

struct Pass {
  RVec y, gw1, gb1, gw2, gb2, dx;
};

Pass run(const simd::KernelTable& k, const Net& net, const RVec& x, const RVec& dy, std::size_t n) {
  Pass p{RVec(net.out * n), RVec(net.w1.size()), RVec(net.b1.size()), RVec(net.w2.size()),
         RVec(net.b2.size()), RVec(net.in * n)};
  RVec hidden(net.hidden * n);
  k.mlp_forward(net.view(), x.data(), n, hidden.data(), p.y.data());
  k.mlp_backward(net.view(), x.data(), hidden.data(), dy.data(), n,
                 {p.gw1.data(), p.gb1.data(), p.gw2.data(), p.gb2.data()}, p.dx.data());
  return p;
}

}  // namespace

TEST_SUITE("simd") {

TEST_CASE("isa names round trip") {
  for (auto isa : {simd::Isa::kScalar, simd::Isa::kAvx2})
    CHECK(simd::parse_isa(simd::isa_name(isa)) == isa);
  CHECK_FALSE(simd::parse_isa("sse9").has_value());
  REQUIRE(simd::kernels_for(simd::Isa::kScalar) != nullptr);
}

TEST_CASE("scalar forward matches a direct evaluation") {
  Rng rng(31);
  const auto& k = *simd::kernels_for(simd::Isa::kScalar);
  const Net net = random_net(3, 6, 2, rng);
  const std::size_t n = 5;
  const RVec x = random_vec(3 * n, rng);
  RVec hidden(6 * n), y(2 * n);
  k.mlp_forward(net.view(), x.data(), n, hidden.data(), y.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = net.b2[o];
      for (std::size_t h = 0; h < 6; ++h) {
        double z = net.b1[h];
        for (std::size_t f = 0; f < 3; ++f) z += net.w1[h * 3 + f] * x[f * n + i];
        acc += net.w2[o * 6 + h] / (1.0 + std::exp(-z));
      }
      CHECK(std::abs(y[o * n + i] - acc) < 1e-12 * (1.0 + std::abs(acc)));
    }
  }
}

TEST_CASE("avx2 kernels match scalar") {
  const auto* vec = simd::kernels_for(simd::Isa::kAvx2);
  if (vec == nullptr) {
    MESSAGE("AVX2 kernels unavailable; equivalence not exercised");
    return;
  }
  const auto& ref = *simd::kernels_for(simd::Isa::kScalar);
  Rng rng(32);
  const std::size_t shapes[][2] = {{3, 3}, {4, 2}, {2, 5}, {1, 1}, {8, 8}};
  for (const auto& sh : shapes) {
    for (std::size_t hidden : {1u, 7u, 64u}) {
      for (std::size_t n : {1u, 3u, 4u, 5u, 17u, 64u, 513u}) {
        CAPTURE(sh[0]);
        CAPTURE(sh[1]);
        CAPTURE(hidden);
        CAPTURE(n);
        const Net net = random_net(sh[0], hidden, sh[1], rng);
        const RVec x = random_vec(sh[0] * n, rng, 3.0);
        const RVec dy = random_vec(sh[1] * n, rng);
        const Pass a = run(ref, net, x, dy, n);
        const Pass b = run(*vec, net, x, dy, n);
        CHECK(max_rel(b.y, a.y) < 1e-12);
        CHECK(max_rel(b.gw1, a.gw1) < 1e-10);
        CHECK(max_rel(b.gb1, a.gb1) < 1e-10);
        CHECK(max_rel(b.gw2, a.gw2) < 1e-10);
        CHECK(max_rel(b.gb2, a.gb2) < 1e-10);
        CHECK(max_rel(b.dx, a.dx) < 1e-12);
      }
    }
  }
}

TEST_CASE("avx2 sigmoid and exp match scalar over the full range") {
  const auto* vec = simd::kernels_for(simd::Isa::kAvx2);
  if (vec == nullptr) return;
  const auto& ref = *simd::kernels_for(simd::Isa::kScalar);
  RVec z;
  for (double v = -800.0; v <= 800.0; v += 0.37) z.push_back(v);
  for (double v : {0.0, -0.0, 1e-300, -1e-300, 708.0, -708.0, 745.0, -745.0, 1e308, -1e308})
    z.push_back(v);
  RVec s1(z.size()), s2(z.size()), e1(z.size()), e2(z.size());
  ref.sigmoid(z.data(), z.size(), s1.data());
  vec->sigmoid(z.data(), z.size(), s2.data());
  ref.exp(z.data(), z.size(), e1.data());
  vec->exp(z.data(), z.size(), e2.data());
  for (std::size_t i = 0; i < z.size(); ++i) {
    CAPTURE(z[i]);
    CHECK(std::abs(s2[i] - s1[i]) <= 1e-15 + 1e-13 * s1[i]);
    CHECK(s2[i] >= 0.0);
    CHECK(s2[i] <= 1.0);
    if (std::isinf(e1[i]))
      CHECK(std::isinf(e2[i]));
    else
      CHECK(std::abs(e2[i] - e1[i]) <= 1e-13 * e1[i] + std::numeric_limits<double>::min());
  }
}

TEST_CASE("backward accumulates into the gradient sinks") {
  Rng rng(33);
  const auto& k = simd::kernels();
  const Net net = random_net(3, 8, 3, rng);
  const std::size_t n = 9;
  const RVec x = random_vec(3 * n, rng), dy = random_vec(3 * n, rng);
  const Pass once = run(k, net, x, dy, n);
  RVec hidden(8 * n), y(3 * n);
  k.mlp_forward(net.view(), x.data(), n, hidden.data(), y.data());
  Pass twice = once;
  k.mlp_backward(net.view(), x.data(), hidden.data(), dy.data(), n,
                 {twice.gw1.data(), twice.gb1.data(), twice.gw2.data(), twice.gb2.data()}, nullptr);
  for (std::size_t i = 0; i < once.gw1.size(); ++i)
    CHECK(std::abs(twice.gw1[i] - 2.0 * once.gw1[i]) < 1e-12 * (1.0 + std::abs(once.gw1[i])));
  for (std::size_t i = 0; i < once.gb2.size(); ++i)
    CHECK(std::abs(twice.gb2[i] - 2.0 * once.gb2[i]) < 1e-12 * (1.0 + std::abs(once.gb2[i])));
}

TEST_CASE("forced isa is honoured") {
  const simd::Isa before = simd::active_isa();
  simd::force(simd::Isa::kScalar);
  CHECK(simd::kernels().isa == simd::Isa::kScalar);
  simd::force(before);
  CHECK(simd::active_isa() == before);
}

}  // TEST_SUITE
