#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "lmlvamp/neural.hpp"

using namespace lmlvamp;
using namespace testing;

namespace {

nn::UnrolledModel random_model(int t, std::uint64_t seed) {
  Rng rng(seed);
  auto m = nn::UnrolledModel::init(t, 2.5, rng);
  RVec flat = nn::flatten(m);
  for (auto& v : flat) v += 0.1 * rng.normal();
  nn::unflatten(m, flat);
  return m;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("single-sample forward against a hand evaluation") {
  nn::MlpWeights w = nn::MlpWeights::zeros(2, 1, 2);
  w.w1 = {1.0, -1.0, 0.5, 2.0};
  w.b1 = {0.0, -1.0};
  w.w2 = {3.0, -2.0};
  w.b2 = {0.25};
  const double x[] = {0.3, 0.7};
  const double h0 = 1.0 / (1.0 + std::exp(-(0.3 - 0.7)));
  const double h1 = 1.0 / (1.0 + std::exp(-(0.15 + 1.4 - 1.0)));
  const RVec y = nn::mlp_forward(w, x);
  CHECK(std::abs(y[0] - (3.0 * h0 - 2.0 * h1 + 0.25)) < 1e-14);
  const double bad[] = {1.0};
  CHECK_THROWS_AS(nn::mlp_forward(w, bad), Error);
}

TEST_CASE("initialization ranges and output biases") {
  Rng rng(51);
  const double bias[] = {0.5, 1.0, 0.0};
  const auto w = nn::MlpWeights::init(3, bias, rng);
  const double limit = std::sqrt(6.0 / (3.0 + nn::kHiddenUnits));
  for (double v : w.w1) CHECK(std::abs(v) <= limit);
  for (double v : w.w2) CHECK(v == 0.0);
  CHECK(w.b2 == RVec{0.5, 1.0, 0.0});
  // Zero output weights: every input gives the bias.
  const double x[] = {10.0, -3.0, 0.2};
  CHECK(nn::mlp_forward(w, x) == RVec{0.5, 1.0, 0.0});
}

TEST_CASE("features follow their definitions") {
  const Complex z1{3.0, 4.0}, y{0.0, -2.0};
  const auto f1 = nn::f1_features(z1, 0.5, y, 4.0);
  CHECK(f1[0] == doctest::Approx(2.5));
  CHECK(f1[1] == doctest::Approx(0.5));
  CHECK(f1[2] == doctest::Approx(1.0));
  const auto f0 = nn::f0_features(z1, 2.0, 8.0, Complex{0.0, 6.0}, 4.0);
  CHECK(f0[0] == doctest::Approx(2.5));
  CHECK(f0[1] == doctest::Approx(0.125));
  CHECK(f0[2] == doctest::Approx(2.0));
  CHECK(f0[3] == doctest::Approx(3.0));
}

TEST_CASE("inverse precision feature is clamped") {
  bool clamped = false;
  CHECK(nn::inv_precision_feature(1e-9, 1.0, &clamped) == nn::kInvPrecisionFeatureMax);
  CHECK(clamped);
  CHECK(nn::inv_precision_feature(2.0, 1.0, &clamped) == 0.5);
  CHECK_FALSE(clamped);
}

TEST_CASE("f1 output map") {
  const Complex z1{1.0, -1.0}, y{0.5, 2.0};
  const double raw[] = {0.4, 1.5, std::log(2.0)};
  const auto r = nn::f1_from_outputs(z1, 3.0, y, raw);
  const Complex want = z1 + 0.4 * (y - 1.5 * z1);
  CHECK(std::abs(r.v - want) < 1e-15);
  CHECK(r.rho1 == doctest::Approx(1.5));
  const double nan_raw[] = {std::nan(""), 1.0, 0.0};
  CHECK_THROWS_AS(nn::f1_from_outputs(z1, 3.0, y, nan_raw), Error);
}

TEST_CASE("f1 and f0 apply reject non-positive precision") {
  Rng rng(52);
  const auto m = nn::UnrolledModel::init(1, 1.0, rng);
  CHECK_THROWS_AS(nn::f1_apply({}, 0.0, {}, 1.0, m.f1[0]), Error);
  CHECK_THROWS_AS(nn::f0_apply({}, -1.0, 1.0, {}, 1.0, m.f0[0]), Error);
  const auto b = nn::f0_apply({1.0, 0.0}, 1.0, 1.0, {}, 1.0, m.f0[0]);
  CHECK(b[0] == 1.0);
  CHECK(b[1] == 0.0);
}

TEST_CASE("model shapes and parameter count") {
  Rng rng(53);
  const auto m = nn::UnrolledModel::init(3, 1.0, rng);
  const std::size_t h = nn::kHiddenUnits;
  const std::size_t per_t = (h * 3 + h + 3 * h + 3) + (h * 4 + h + 2 * h + 2);
  CHECK(m.num_params() == 3 * per_t);
  CHECK(nn::flatten(m).size() == m.num_params());
  CHECK_THROWS_AS(nn::UnrolledModel::init(0, 1.0, rng), Error);
}

TEST_CASE("shared initialization repeats the first iteration") {
  Rng rng(54);
  const auto m = nn::UnrolledModel::init(3, 1.0, rng, false, true);
  CHECK(m.f1[1] == m.f1[0]);
  CHECK(m.f0[2] == m.f0[0]);
}

TEST_CASE("flatten and unflatten are inverse") {
  auto m = random_model(2, 55);
  const RVec flat = nn::flatten(m);
  Rng rng(0);
  nn::UnrolledModel copy = nn::UnrolledModel::init(2, 2.5, rng);
  nn::unflatten(copy, flat);
  CHECK(copy == m);
  CHECK_THROWS_AS(nn::unflatten(copy, RVec(3)), Error);
}

TEST_CASE("serialization round trip is exact") {
  auto m = random_model(3, 56);
  m.fix_beta = true;
  const auto bytes = nn::serialize(m);
  const auto back = nn::deserialize(bytes);
  CHECK(back == m);
  CHECK(nn::serialize(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "lmlvamp_test_model.bin";
  nn::save_model(m, path);
  CHECK(nn::load_model(path) == m);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(nn::load_model(path), Error);
}

TEST_CASE("corrupt model files are rejected") {
  const auto bytes = nn::serialize(random_model(1, 57));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(nn::deserialize(bad), Error);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(nn::deserialize(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(nn::deserialize(trailing), Error);
  auto version = bytes;
  version[4] = 99;
  CHECK_THROWS_AS(nn::deserialize(version), Error);
}

TEST_CASE("validation rejects non-finite weights") {
  auto m = random_model(1, 58);
  m.f1[0].w2[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(m.validate(), Error);
}

}  // TEST_SUITE
