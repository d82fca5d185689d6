#include <doctest.h>

#include <functional>

#include "helpers.hpp"
#include "lmlvamp/tape.hpp"

using namespace lmlvamp;
using namespace testing;
using nn::Tape;
using nn::Var;

namespace {

using Builder = std::function<Var(Tape&, Var)>;

RVec random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  RVec v(n);
  for (auto& d : v) d = rng.uniform(lo, hi);
  return v;
}

// Largest relative gap between the tape gradient and central differences.
double gradient_gap(const Builder& build, const RVec& p0, double h = 1e-6) {
  Tape tape;
  const Var p = tape.parameter(p0);
  const Var loss = build(tape, p);
  tape.backward(loss);
  const RVec grad = tape.grad(p);
  auto eval = [&](const RVec& p1) {
    Tape t;
    return t.scalar(build(t, t.parameter(p1)));
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < p0.size(); ++k) {
    RVec a = p0, b = p0;
    a[k] += h;
    b[k] -= h;
    const double fd = (eval(a) - eval(b)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1e-4, std::abs(fd)));
  }
  return worst;
}

// Reduces any node to a scalar with fixed random weights so every output
// element contributes a distinct gradient.
Var project(Tape& t, Var v) {
  Rng rng(99);
  const RVec w = random_vec(t.value(v).size(), rng);
  return t.sum(t.mul_const(v, w));
}

}  // namespace

TEST_SUITE("tape") {

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(41);
  const RVec p0 = random_vec(6, rng, 0.2, 1.5);
  const RVec c = random_vec(6, rng);
  const std::vector<std::pair<const char*, Builder>> cases{
      {"add", [&](Tape& t, Var p) { return project(t, t.add(p, t.mul(p, p))); }},
      {"sub", [&](Tape& t, Var p) { return project(t, t.sub(t.exp(p), p)); }},
      {"mul", [&](Tape& t, Var p) { return project(t, t.mul(p, t.exp(p))); }},
      {"scale var", [&](Tape& t, Var p) { return project(t, t.scale(p, t.mean(p))); }},
      {"scale const", [&](Tape& t, Var p) { return project(t, t.scale(p, -2.5)); }},
      {"add_const", [&](Tape& t, Var p) { return project(t, t.mul(t.add_const(p, c), p)); }},
      {"mul_const", [&](Tape& t, Var p) { return project(t, t.mul_const(t.mul(p, p), c)); }},
      {"exp", [&](Tape& t, Var p) { return project(t, t.exp(p)); }},
      {"recip", [&](Tape& t, Var p) { return project(t, t.recip(p)); }},
      {"mean", [&](Tape& t, Var p) { return t.mul(t.mean(p), t.sum(t.exp(p))); }},
      {"broadcast", [&](Tape& t, Var p) { return project(t, t.broadcast(t.sum(p), 4)); }},
      {"clamp", [&](Tape& t, Var p) { return project(t, t.clamp(p, 0.5, 1.2)); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    CHECK(gradient_gap(build, p0) < 1e-6);
  }
}

TEST_CASE("complex ops match finite differences") {
  Rng rng(42);
  const std::size_t n = 8;
  const RVec p0 = random_vec(2 * n, rng);
  const spectrum::Dft dft(n);
  RVec target = random_vec(2 * n, rng), mask(n, 0.0);
  for (std::size_t i = 0; i < n; i += 2) mask[i] = 1.0;
  const std::vector<std::pair<const char*, Builder>> cases{
      {"cabs", [&](Tape& t, Var p) { return project(t, t.cabs(p)); }},
      {"cmul_real",
       [&](Tape& t, Var p) { return project(t, t.cmul_real(p, t.exp(t.row(p, 0, n)))); }},
      {"dft", [&](Tape& t, Var p) { return project(t, t.dft(p, dft, false)); }},
      {"idft", [&](Tape& t, Var p) { return project(t, t.dft(t.mul(p, p), dft, true)); }},
      {"masked error", [&](Tape& t, Var p) { return t.masked_sq_error(p, target, mask); }},
      {"stack/row",
       [&](Tape& t, Var p) {
         const Var rows[] = {t.row(p, 1, n), t.exp(t.row(p, 0, n))};
         return project(t, t.stack(rows));
       }},
      {"lincomb",
       [&](Tape& t, Var p) {
         const Var parts[] = {t.sum(p), t.sum(t.mul(p, p))};
         const double w[] = {0.3, 1.7};
         return t.lincomb(parts, w);
       }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    CHECK(gradient_gap(build, p0) < 1e-6);
  }
}

TEST_CASE("mlp op gradients for every argument") {
  Rng rng(43);
  const std::size_t n = 6, in = 3, hidden = 5, out = 2;
  const RVec w1 = random_vec(hidden * in, rng), b1 = random_vec(hidden, rng);
  const RVec w2 = random_vec(out * hidden, rng), b2 = random_vec(out, rng);
  const RVec x = random_vec(in * n, rng);
  for (int which = 0; which < 5; ++which) {
    CAPTURE(which);
    const RVec* arrays[] = {&w1, &b1, &w2, &b2, &x};
    auto build = [&](Tape& t, Var p) {
      Var args[5];
      for (int k = 0; k < 5; ++k) args[k] = k == which ? p : t.constant(*arrays[k]);
      const Var y = t.mlp(args[0], args[1], args[2], args[3], args[4], in, hidden, out);
      return t.sum(t.mul(y, y));
    };
    CHECK(gradient_gap(build, *arrays[which]) < 1e-6);
  }
}

TEST_CASE("clamp passes no gradient at or outside its bounds") {
  Tape t;
  const Var p = t.parameter({-1.0, 0.0, 0.5, 1.0, 3.0});
  t.backward(t.sum(t.clamp(p, 0.0, 1.0)));
  const RVec want{0.0, 0.0, 1.0, 0.0, 0.0};
  CHECK(t.grad(p) == want);
}

TEST_CASE("constants carry no gradient") {
  Tape t;
  const Var c = t.constant({1.0, 2.0});
  const Var p = t.parameter({3.0, 4.0});
  t.backward(t.sum(t.mul(c, p)));
  CHECK(t.grad(c).empty());
  CHECK(t.grad(p) == RVec{1.0, 2.0});
}

TEST_CASE("recording after clear reproduces values and gradients") {
  Rng rng(44);
  const std::size_t n = 300;
  const RVec x = random_vec(3 * n, rng), w1 = random_vec(64 * 3, rng), b1 = random_vec(64, rng);
  const RVec w2 = random_vec(2 * 64, rng), b2 = random_vec(2, rng);
  Tape t;
  RVec first_grad, first_val;
  for (int round = 0; round < 3; ++round) {
    t.clear();
    const Var p = t.parameter(w1);
    const Var y = t.mlp(p, t.constant(b1), t.constant(w2), t.constant(b2), t.constant(x), 3, 64, 2);
    const Var loss = t.sum(t.mul(y, y));
    t.backward(loss);
    if (round == 0) {
      first_grad = t.grad(p);
      first_val = t.value(y);
    } else {
      CHECK(t.grad(p) == first_grad);
      CHECK(t.value(y) == first_val);
    }
  }
}

TEST_CASE("shape errors are reported") {
  Tape t;
  const Var a = t.constant({1.0, 2.0}), b = t.constant({1.0, 2.0, 3.0});
  CHECK_THROWS_AS(t.add(a, b), Error);
  CHECK_THROWS_AS(t.scale(a, b), Error);
  CHECK_THROWS_AS(t.cabs(b), Error);
  CHECK_THROWS_AS(t.row(b, 3, 1), Error);
  CHECK_THROWS_AS(t.scalar(a), Error);
}

}  // TEST_SUITE
