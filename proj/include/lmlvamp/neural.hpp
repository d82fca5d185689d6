#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lmlvamp/common.hpp"
#include "lmlvamp/rng.hpp"
#include "lmlvamp/simd.hpp"

namespace lmlvamp::nn {

inline constexpr std::size_t kHiddenUnits = 64;
inline constexpr std::size_t kF1Inputs = 3;   // |z1|/sqrt(P), 1/(gamma1 P), |y|/sqrt(P)
inline constexpr std::size_t kF1Outputs = 3;  // kappa0, kappa1, log x_var
inline constexpr std::size_t kF0Inputs = 4;   // |z0|/sqrt(P), 1/(gamma0 P), S/P, |mu|/sqrt(P)
inline constexpr std::size_t kF0Outputs = 2;  // rho0 pair, averaged into (beta0, beta1)

// Upper clamp on the inverse-precision feature 1/(gamma P).
inline constexpr double kInvPrecisionFeatureMax = 1e3;

struct MlpWeights {
  std::size_t in = 0;
  std::size_t hidden = kHiddenUnits;
  std::size_t out = 0;
  RVec w1;  // hidden x in, row-major
  RVec b1;
  RVec w2;  // out x hidden
  RVec b2;

  static MlpWeights zeros(std::size_t in, std::size_t out, std::size_t hidden = kHiddenUnits);
  // Hidden layer uniform in +/- sqrt(6 / (in + hidden)); output layer zero
  // except the bias, which is set to `out_bias`.
  static MlpWeights init(std::size_t in, std::span<const double> out_bias, Rng& rng,
                         std::size_t hidden = kHiddenUnits);

  simd::MlpView view() const { return {in, hidden, out, w1.data(), b1.data(), w2.data(), b2.data()}; }
  std::size_t num_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  void validate() const;
  bool operator==(const MlpWeights&) const = default;
};

// Single-sample evaluation: W2 sigmoid(W1 x + b1) + b2.
RVec mlp_forward(const MlpWeights& w, std::span<const double> features);

std::array<double, kF1Inputs> f1_features(Complex z1, double gamma1, Complex y, double p_sat);
std::array<double, kF0Inputs> f0_features(Complex z0, double gamma0, double s, Complex mu,
                                          double p_sat);

// Clamped 1/(gamma P); `clamped` is set when the clamp was active.
double inv_precision_feature(double gamma, double p_sat, bool* clamped = nullptr);

struct F1Result {
  Complex v;     // z1 + kappa0 (y - kappa1 z1)
  double rho1;   // gamma1 / exp(log x_var)
  double kappa0, kappa1, log_xvar;
};

F1Result f1_from_outputs(Complex z1, double gamma1, Complex y, std::span<const double> raw);
F1Result f1_apply(Complex z1, double gamma1, Complex y, double p_sat, const MlpWeights& w);
std::array<double, 2> f0_apply(Complex z0, double gamma0, double s, Complex mu, double p_sat,
                               const MlpWeights& w);

// Per-iteration networks of the unrolled algorithm.
struct UnrolledModel {
  std::vector<MlpWeights> f0;  // length t_max
  std::vector<MlpWeights> f1;  // length t_max
  double p_sat = 1.0;
  int t_max = 1;
  bool fix_beta = false;       // force (beta0, beta1) = (1, 0); f0 unused
  bool shared = false;         // all iterations carry identical weights

  static UnrolledModel init(int t_max, double p_sat, Rng& rng, bool fix_beta = false,
                            bool shared = false);
  void validate() const;
  std::size_t num_params() const;
  bool operator==(const UnrolledModel&) const = default;
};

// Flat parameter vector, ordered by iteration, f1 before f0, then
// w1, b1, w2, b2 within a network.
RVec flatten(const UnrolledModel& m);
void unflatten(UnrolledModel& m, std::span<const double> flat);

// Binary model file: "LMLV" magic, u32 version, u32 T, u32 flags,
// f64 P_sat, then per iteration f1 then f0 as u32 (in, hidden, out) and the
// w1, b1, w2, b2 arrays. All integers and floats little-endian.
std::vector<std::uint8_t> serialize(const UnrolledModel& m);
UnrolledModel deserialize(std::span<const std::uint8_t> bytes);
void save_model(const UnrolledModel& m, const std::filesystem::path& path);
UnrolledModel load_model(const std::filesystem::path& path);

}  // namespace lmlvamp::nn
