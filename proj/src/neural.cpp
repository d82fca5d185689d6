#include "lmlvamp/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lmlvamp::nn {

MlpWeights MlpWeights::zeros(std::size_t in, std::size_t out, std::size_t hidden) {
  return {in, hidden, out, RVec(hidden * in), RVec(hidden), RVec(out * hidden), RVec(out)};
}

MlpWeights MlpWeights::init(std::size_t in, std::span<const double> out_bias, Rng& rng,
                            std::size_t hidden) {
  MlpWeights w = zeros(in, out_bias.size(), hidden);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + hidden));
  for (auto& v : w.w1) v = rng.uniform(-limit, limit);
  for (auto& v : w.b1) v = rng.uniform(-limit, limit);
  std::copy(out_bias.begin(), out_bias.end(), w.b2.begin());
  return w;
}

void MlpWeights::validate() const {
  if (in == 0 || out == 0 || hidden == 0) throw Error("MlpWeights: empty layer");
  if (in > simd::kMaxMlpPorts || out > simd::kMaxMlpPorts)
    throw Error("MlpWeights: too many inputs or outputs");
  if (w1.size() != hidden * in || b1.size() != hidden || w2.size() != out * hidden ||
      b2.size() != out)
    throw Error("MlpWeights: array sizes do not match dimensions");
  for (const RVec* a : {&w1, &b1, &w2, &b2})
    for (double v : *a)
      if (!std::isfinite(v)) throw Error("MlpWeights: non-finite weight");
}

RVec mlp_forward(const MlpWeights& w, std::span<const double> features) {
  if (features.size() != w.in) {
    std::ostringstream os;
    os << "mlp_forward: expected " << w.in << " features, got " << features.size();
    throw Error(os.str());
  }
  RVec hidden(w.hidden), out(w.out);
  simd::kernels().mlp_forward(w.view(), features.data(), 1, hidden.data(), out.data());
  return out;
}

double inv_precision_feature(double gamma, double p_sat, bool* clamped) {
  const double raw = 1.0 / (gamma * p_sat);
  const double v = std::clamp(raw, 0.0, kInvPrecisionFeatureMax);
  if (clamped) *clamped = !(raw == v);
  return v;
}

std::array<double, kF1Inputs> f1_features(Complex z1, double gamma1, Complex y, double p_sat) {
  const double root = std::sqrt(p_sat);
  return {std::abs(z1) / root, inv_precision_feature(gamma1, p_sat), std::abs(y) / root};
}

std::array<double, kF0Inputs> f0_features(Complex z0, double gamma0, double s, Complex mu,
                                          double p_sat) {
  const double root = std::sqrt(p_sat);
  return {std::abs(z0) / root, inv_precision_feature(gamma0, p_sat), s / p_sat,
          std::abs(mu) / root};
}

F1Result f1_from_outputs(Complex z1, double gamma1, Complex y, std::span<const double> raw) {
  F1Result r{};
  r.kappa0 = raw[0];
  r.kappa1 = raw[1];
  r.log_xvar = raw[2];
  if (!std::isfinite(r.kappa0) || !std::isfinite(r.kappa1) || !std::isfinite(r.log_xvar))
    throw Error("f1_apply: non-finite network output");
  r.v = z1 + r.kappa0 * (y - r.kappa1 * z1);
  r.rho1 = gamma1 / std::exp(r.log_xvar);
  return r;
}

F1Result f1_apply(Complex z1, double gamma1, Complex y, double p_sat, const MlpWeights& w) {
  if (!(gamma1 > 0.0) || !(p_sat > 0.0)) throw Error("f1_apply: gamma1 and p_sat must be positive");
  const auto feat = f1_features(z1, gamma1, y, p_sat);
  const RVec raw = mlp_forward(w, feat);
  return f1_from_outputs(z1, gamma1, y, raw);
}

std::array<double, 2> f0_apply(Complex z0, double gamma0, double s, Complex mu, double p_sat,
                               const MlpWeights& w) {
  if (!(gamma0 > 0.0) || !(p_sat > 0.0)) throw Error("f0_apply: gamma0 and p_sat must be positive");
  const auto feat = f0_features(z0, gamma0, s, mu, p_sat);
  const RVec raw = mlp_forward(w, feat);
  if (!std::isfinite(raw[0]) || !std::isfinite(raw[1]))
    throw Error("f0_apply: non-finite network output");
  return {raw[0], raw[1]};
}

// ---------------------------------------------------------------------------

UnrolledModel UnrolledModel::init(int t_max, double p_sat, Rng& rng, bool fix_beta, bool shared) {
  if (t_max < 1) throw Error("UnrolledModel: T must be at least 1");
  static constexpr double f1_bias[kF1Outputs] = {0.5, 1.0, 0.0};
  static constexpr double f0_bias[kF0Outputs] = {1.0, 0.0};
  UnrolledModel m;
  m.p_sat = p_sat;
  m.t_max = t_max;
  m.fix_beta = fix_beta;
  m.shared = shared;
  for (int t = 0; t < t_max; ++t) {
    if (shared && t > 0) {
      m.f1.push_back(m.f1.front());
      m.f0.push_back(m.f0.front());
      continue;
    }
    m.f1.push_back(MlpWeights::init(kF1Inputs, f1_bias, rng));
    m.f0.push_back(MlpWeights::init(kF0Inputs, f0_bias, rng));
  }
  return m;
}

void UnrolledModel::validate() const {
  if (t_max < 1) throw Error("UnrolledModel: T must be at least 1");
  if (f0.size() != static_cast<std::size_t>(t_max) || f1.size() != static_cast<std::size_t>(t_max))
    throw Error("UnrolledModel: weight lists must have length T");
  if (!(p_sat > 0.0)) throw Error("UnrolledModel: p_sat must be positive");
  for (const auto& w : f1) {
    w.validate();
    if (w.in != kF1Inputs || w.out != kF1Outputs) throw Error("UnrolledModel: bad f1 shape");
  }
  for (const auto& w : f0) {
    w.validate();
    if (w.in != kF0Inputs || w.out != kF0Outputs) throw Error("UnrolledModel: bad f0 shape");
  }
}

std::size_t UnrolledModel::num_params() const {
  std::size_t n = 0;
  for (int t = 0; t < t_max; ++t) n += f1[t].num_params() + f0[t].num_params();
  return n;
}

namespace {

template <typename Fn>
void for_each_array(UnrolledModel& m, Fn&& fn) {
  for (int t = 0; t < m.t_max; ++t)
    for (MlpWeights* w : {&m.f1[t], &m.f0[t]})
      for (RVec* a : {&w->w1, &w->b1, &w->w2, &w->b2}) fn(*a);
}

}  // namespace

RVec flatten(const UnrolledModel& m) {
  RVec flat;
  flat.reserve(m.num_params());
  for_each_array(const_cast<UnrolledModel&>(m),
                 [&](RVec& a) { flat.insert(flat.end(), a.begin(), a.end()); });
  return flat;
}

void unflatten(UnrolledModel& m, std::span<const double> flat) {
  if (flat.size() != m.num_params()) throw Error("unflatten: parameter count mismatch");
  std::size_t pos = 0;
  for_each_array(m, [&](RVec& a) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), a.size(), a.begin());
    pos += a.size();
  });
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr char kMagic[4] = {'L', 'M', 'L', 'V'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * b);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * b);
    return std::bit_cast<double>(v);
  }
  std::uint8_t byte() {
    need(1);
    return bytes_[pos_++];
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > bytes_.size()) throw Error("model file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_mlp(Writer& w, const MlpWeights& m) {
  w.u32(static_cast<std::uint32_t>(m.in));
  w.u32(static_cast<std::uint32_t>(m.hidden));
  w.u32(static_cast<std::uint32_t>(m.out));
  for (const RVec* a : {&m.w1, &m.b1, &m.w2, &m.b2})
    for (double v : *a) w.f64(v);
}

MlpWeights read_mlp(Reader& r) {
  const std::size_t in = r.u32(), hidden = r.u32(), out = r.u32();
  if (in == 0 || out == 0 || hidden == 0 || in > simd::kMaxMlpPorts ||
      out > simd::kMaxMlpPorts || hidden > 1u << 16)
    throw Error("model file: implausible layer dimensions");
  MlpWeights m = MlpWeights::zeros(in, out, hidden);
  for (RVec* a : {&m.w1, &m.b1, &m.w2, &m.b2})
    for (double& v : *a) v = r.f64();
  return m;
}

}  // namespace

std::vector<std::uint8_t> serialize(const UnrolledModel& m) {
  m.validate();
  Writer w;
  for (char c : kMagic) w.bytes.push_back(static_cast<std::uint8_t>(c));
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(m.t_max));
  w.u32((m.fix_beta ? 1u : 0u) | (m.shared ? 2u : 0u));
  w.f64(m.p_sat);
  for (int t = 0; t < m.t_max; ++t) {
    write_mlp(w, m.f1[t]);
    write_mlp(w, m.f0[t]);
  }
  return std::move(w.bytes);
}

UnrolledModel deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (r.byte() != static_cast<std::uint8_t>(c)) throw Error("model file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    std::ostringstream os;
    os << "model file: unsupported version " << version;
    throw Error(os.str());
  }
  UnrolledModel m;
  m.t_max = static_cast<int>(r.u32());
  if (m.t_max < 1 || m.t_max > 1000) throw Error("model file: implausible T");
  const std::uint32_t flags = r.u32();
  m.fix_beta = flags & 1u;
  m.shared = flags & 2u;
  m.p_sat = r.f64();
  for (int t = 0; t < m.t_max; ++t) {
    m.f1.push_back(read_mlp(r));
    m.f0.push_back(read_mlp(r));
  }
  if (!r.done()) throw Error("model file: trailing bytes");
  m.validate();
  return m;
}

void save_model(const UnrolledModel& m, const std::filesystem::path& path) {
  const auto bytes = serialize(m);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open model file for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing model file: " + path.string());
}

UnrolledModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("missing model file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace lmlvamp::nn
