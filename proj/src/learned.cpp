#include "lmlvamp/learned.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "lmlvamp/rng.hpp"

namespace lmlvamp::learned {

using nn::Tape;
using nn::Var;
using spectrum::PriorSpec;

namespace {

RVec split(std::span<const Complex> c) {
  const std::size_t n = c.size();
  RVec out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = c[i].real();
    out[n + i] = c[i].imag();
  }
  return out;
}

double clamp_gamma(double g, int& events) {
  const double c = std::clamp(g, kGammaMin, kGammaMax);
  if (!(c == g)) ++events;
  return c;
}

void check_finite(std::span<const Complex> v, int t, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) {
      std::ostringstream os;
      os << "infer: non-finite " << what << " at iteration " << t << ", sample " << i;
      throw Error(os.str());
    }
}

}  // namespace

InferenceResult infer(std::span<const Complex> y, const PriorSpec& prior,
                      const nn::UnrolledModel& model, const spectrum::Dft& dft) {
  const std::size_t n = prior.n();
  if (y.size() != n || dft.n() != n) throw Error("infer: length mismatch");
  if (model.t_max < 1) throw Error("infer: model needs at least one iteration");
  const double p = model.p_sat;
  const double root = std::sqrt(p);
  const auto& kern = simd::kernels();

  InferenceResult res;
  CVec z1 = dft.inverse(prior.mu);
  double gamma1 = clamp_gamma(1.0 / prior.mean_variance(), res.gamma_clamps);

  RVec feat1(nn::kF1Inputs * n), out1(nn::kF1Outputs * n), hidden(nn::kHiddenUnits * n);
  RVec feat0(nn::kF0Inputs * n), out0(nn::kF0Outputs * n);
  for (std::size_t i = 0; i < n; ++i) {
    feat1[2 * n + i] = std::abs(y[i]) / root;
    feat0[2 * n + i] = prior.s[i] / p;
    feat0[3 * n + i] = std::abs(prior.mu[i]) / root;
  }
  CVec v(n), xhat(n);
  for (int t = 0; t < model.t_max; ++t) {
    // Neural denoising, per time sample.
    bool clamped = false;
    const double inv1 = nn::inv_precision_feature(gamma1, p, &clamped);
    res.feature_clamps += clamped ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      feat1[i] = std::abs(z1[i]) / root;
      feat1[n + i] = inv1;
    }
    kern.mlp_forward(model.f1[t].view(), feat1.data(), n, hidden.data(), out1.data());
    double rho_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double k0 = out1[i], k1 = out1[n + i], lxv = out1[2 * n + i];
      v[i] = z1[i] + k0 * (y[i] - k1 * z1[i]);
      rho_sum += gamma1 * std::exp(-lxv);
    }
    check_finite(v, t, "v");
    const double gamma0 = clamp_gamma(rho_sum / static_cast<double>(n), res.gamma_clamps);
    const CVec z0 = dft.forward(v);

    // Spectral denoising.
    double gain_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double gs = gamma0 * prior.s[i];
      const double gain = gs / (1.0 + gs);
      xhat[i] = prior.mu[i] + gain * (z0[i] - prior.mu[i]);
      gain_sum += gain;
    }
    check_finite(xhat, t, "xhat");
    const double mean_gain = std::clamp(gain_sum / static_cast<double>(n), 1e-300, 2.0);
    const double gamma1_next = clamp_gamma(gamma0 / mean_gain, res.gamma_clamps);

    // Message update.
    double beta0 = 1.0, beta1 = 0.0;
    if (!model.fix_beta) {
      const double inv0 = nn::inv_precision_feature(gamma0, p, &clamped);
      res.feature_clamps += clamped ? 1 : 0;
      for (std::size_t i = 0; i < n; ++i) {
        feat0[i] = std::abs(z0[i]) / root;
        feat0[n + i] = inv0;
      }
      kern.mlp_forward(model.f0[t].view(), feat0.data(), n, hidden.data(), out0.data());
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s0 += out0[i];
        s1 += out0[n + i];
      }
      beta0 = s0 / static_cast<double>(n);
      beta1 = s1 / static_cast<double>(n);
    }
    const CVec rx = dft.inverse(xhat);
    if (beta1 != 0.0) {
      const CVec rz = dft.inverse(z0);
      for (std::size_t i = 0; i < n; ++i) z1[i] = beta0 * rx[i] - beta1 * rz[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) z1[i] = beta0 * rx[i];
    }
    check_finite(z1, t, "z1");

    res.trajectory.push_back(xhat);
    res.beta0.push_back(beta0);
    res.beta1.push_back(beta1);
    res.gamma0.push_back(gamma0);
    res.gamma1.push_back(gamma1);
    gamma1 = gamma1_next;
  }

  const spectrum::Band& b0 = prior.layout.band(0);
  res.xhat0.assign(n, Complex{});
  std::copy(xhat.begin() + b0.begin, xhat.begin() + b0.end, res.xhat0.begin() + b0.begin);
  return res;
}

std::vector<double> early_weights(int t_max) {
  std::vector<double> w;
  const double denom = 0.5 * (t_max - 1) * t_max;
  for (int t = 1; t < t_max; ++t) w.push_back(t / denom);
  return w;
}

double loss_total(const std::vector<CVec>& trajectory, std::span<const Complex> x0_true,
                  const spectrum::Band& band0, double eta) {
  if (trajectory.empty()) throw Error("loss_total: empty trajectory");
  auto err = [&](const CVec& xh) {
    double acc = 0.0;
    for (std::size_t i = band0.begin; i < band0.end; ++i) acc += std::norm(x0_true[i] - xh[i]);
    return acc;
  };
  const int t_max = static_cast<int>(trajectory.size());
  const auto w = early_weights(t_max);
  double early = 0.0;
  for (int t = 1; t < t_max; ++t) early += w[t - 1] * err(trajectory[t - 1]);
  return eta * err(trajectory.back()) + (1.0 - eta) * early;
}

// ---------------------------------------------------------------------------
// Dataset

std::size_t Dataset::n() const { return items.empty() ? 0 : items.front().prior.n(); }

void Dataset::validate() const {
  if (items.empty()) throw Error("Dataset: empty");
  const std::size_t n0 = n();
  const auto& bands0 = items.front().prior.layout.bands();
  for (const auto& it : items) {
    if (it.prior.n() != n0 || it.y.size() != n0 || it.x0_true.size() != n0)
      throw Error("Dataset: items differ in N");
    const auto& b = it.prior.layout.bands();
    if (b.size() != bands0.size()) throw Error("Dataset: items differ in band layout");
    for (std::size_t l = 0; l < b.size(); ++l)
      if (b[l].begin != bands0[l].begin || b[l].end != bands0[l].end)
        throw Error("Dataset: items differ in band layout");
  }
}

void TrainConfig::validate() const {
  if (t_max < 1) throw Error("TrainConfig: t_iters must be >= 1");
  if (!(eta > 0.5 && eta <= 1.0)) throw Error("TrainConfig: eta must lie in (0.5, 1]");
  if (n_samples < 1 || n_epochs < 0 || batch_size < 1)
    throw Error("TrainConfig: n_samples, batch_size must be positive and n_epochs >= 0");
  if (!(lr0 > 0.0) || !(lr_decay > 0.0)) throw Error("TrainConfig: learning rate must be positive");
  if (!(clip_norm > 0.0)) throw Error("TrainConfig: clip_norm must be positive");
}

// ---------------------------------------------------------------------------
// Training graph

GraphOutput record_unrolled(Tape& tape, const nn::UnrolledModel& model, const DatasetItem& item,
                            const spectrum::Dft& dft, double eta) {
  const PriorSpec& prior = item.prior;
  const std::size_t n = prior.n();
  const double p = model.p_sat;
  const double root = std::sqrt(p);
  GraphOutput g;

  for (int t = 0; t < model.t_max; ++t)
    for (const nn::MlpWeights* w : {&model.f1[t], &model.f0[t]})
      for (const RVec* a : {&w->w1, &w->b1, &w->w2, &w->b2}) g.params.push_back(tape.parameter(*a));

  const RVec mu2 = split(prior.mu);
  RVec neg_mu2 = mu2;
  for (auto& v : neg_mu2) v = -v;
  RVec y_abs(n), s_feat(n), mu_feat(n);
  for (std::size_t i = 0; i < n; ++i) {
    y_abs[i] = std::abs(item.y[i]) / root;
    s_feat[i] = prior.s[i] / p;
    mu_feat[i] = std::abs(prior.mu[i]) / root;
  }
  const RVec ones(n, 1.0);
  const Var y_c = tape.constant(split(item.y));
  const Var y_feat = tape.constant(y_abs);
  const Var s_c = tape.constant(prior.s);
  const Var s_feat_c = tape.constant(s_feat);
  const Var mu_feat_c = tape.constant(mu_feat);

  auto clamp_gamma_var = [&](Var gv) {
    const double raw = tape.scalar(gv);
    if (raw < kGammaMin || raw > kGammaMax) ++g.gamma_clamps;
    return tape.clamp(gv, kGammaMin, kGammaMax);
  };
  auto inv_precision = [&](Var gv) {
    return tape.clamp(tape.broadcast(tape.recip(tape.scale(gv, p)), n), 0.0,
                      nn::kInvPrecisionFeatureMax);
  };

  Var z1 = tape.constant(split(dft.inverse(prior.mu)));
  Var gamma1 = clamp_gamma_var(tape.constant_scalar(1.0 / prior.mean_variance()));

  for (int t = 0; t < model.t_max; ++t) {
    const Var* w1p = &g.params[8 * t];
    const Var* w0p = w1p + 4;

    const Var f1_in[] = {tape.scale(tape.cabs(z1), 1.0 / root), inv_precision(gamma1), y_feat};
    const Var out1 = tape.mlp(w1p[0], w1p[1], w1p[2], w1p[3], tape.stack(f1_in), nn::kF1Inputs,
                              model.f1[t].hidden, nn::kF1Outputs);
    const Var k0 = tape.row(out1, 0, n), k1 = tape.row(out1, 1, n), lxv = tape.row(out1, 2, n);
    const Var v = tape.add(z1, tape.cmul_real(tape.sub(y_c, tape.cmul_real(z1, k1)), k0));
    const Var rho1 = tape.mul(tape.broadcast(gamma1, n), tape.exp(tape.scale(lxv, -1.0)));
    const Var gamma0 = clamp_gamma_var(tape.mean(rho1));
    const Var z0 = tape.dft(v, dft, false);

    const Var gs = tape.scale(s_c, gamma0);
    const Var gain = tape.mul(gs, tape.recip(tape.add_const(gs, ones)));
    const Var xhat = tape.add_const(tape.cmul_real(tape.add_const(z0, neg_mu2), gain), mu2);
    const Var mean_gain = tape.clamp(tape.mean(gain), 1e-300, 2.0);
    gamma1 = clamp_gamma_var(tape.mul(gamma0, tape.recip(mean_gain)));

    if (model.fix_beta) {
      z1 = tape.dft(xhat, dft, true);
    } else {
      const Var f0_in[] = {tape.scale(tape.cabs(z0), 1.0 / root), inv_precision(gamma0), s_feat_c,
                           mu_feat_c};
      const Var out0 = tape.mlp(w0p[0], w0p[1], w0p[2], w0p[3], tape.stack(f0_in),
                                nn::kF0Inputs, model.f0[t].hidden, nn::kF0Outputs);
      const Var beta0 = tape.mean(tape.row(out0, 0, n));
      const Var beta1 = tape.mean(tape.row(out0, 1, n));
      z1 = tape.sub(tape.scale(tape.dft(xhat, dft, true), beta0),
                    tape.scale(tape.dft(z0, dft, true), beta1));
    }
    g.trajectory.push_back(xhat);
  }

  const RVec x0 = split(item.x0_true);
  const RVec mask = prior.layout.mask(0);
  std::vector<Var> terms;
  std::vector<double> weights;
  const auto w = early_weights(model.t_max);
  for (int t = 1; t < model.t_max; ++t) {
    terms.push_back(tape.masked_sq_error(g.trajectory[t - 1], x0, mask));
    weights.push_back((1.0 - eta) * w[t - 1]);
  }
  terms.push_back(tape.masked_sq_error(g.trajectory.back(), x0, mask));
  weights.push_back(eta);
  g.loss = tape.lincomb(terms, weights);
  return g;
}

double loss_and_gradient(const nn::UnrolledModel& model, const DatasetItem& item,
                         const spectrum::Dft& dft, double eta, std::span<double> grad,
                         int* gamma_clamps) {
  Tape tape;
  return loss_and_gradient(tape, model, item, dft, eta, grad, gamma_clamps);
}

double loss_and_gradient(Tape& tape, const nn::UnrolledModel& model, const DatasetItem& item,
                         const spectrum::Dft& dft, double eta, std::span<double> grad,
                         int* gamma_clamps) {
  tape.clear();
  const GraphOutput g = record_unrolled(tape, model, item, dft, eta);
  tape.backward(g.loss);
  std::size_t pos = 0;
  for (Var pv : g.params) {
    const RVec& gr = tape.grad(pv);
    std::copy(gr.begin(), gr.end(), grad.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += gr.size();
  }
  if (pos != grad.size()) throw Error("loss_and_gradient: gradient buffer has the wrong size");
  if (gamma_clamps) *gamma_clamps = g.gamma_clamps;
  return tape.scalar(g.loss);
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> theta, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  RVec m_, v_;
  long t_ = 0;
};

// Ties gradients of shared networks: every iteration receives the sum.
void tie_shared(const nn::UnrolledModel& m, std::span<double> grad) {
  const std::size_t per_t = m.f1[0].num_params() + m.f0[0].num_params();
  for (std::size_t j = 0; j < per_t; ++j) {
    double acc = 0.0;
    for (int t = 0; t < m.t_max; ++t) acc += grad[t * per_t + j];
    for (int t = 0; t < m.t_max; ++t) grad[t * per_t + j] = acc;
  }
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, double p_sat) {
  cfg.validate();
  data.validate();
  const std::size_t n_items = data.items.size();
  const spectrum::Dft dft(data.n());

  Rng init_rng({cfg.seed, 0x1417ULL});
  TrainResult res{nn::UnrolledModel::init(cfg.t_max, p_sat, init_rng, cfg.fix_beta,
                                          cfg.shared_weights),
                  {}};
  RVec theta = nn::flatten(res.model);
  const std::size_t n_params = theta.size();
  Adam adam(n_params);

  const int threads =
      cfg.threads > 0 ? cfg.threads : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  std::vector<Tape> tapes(threads);
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    Rng shuffle_rng({cfg.seed, 0x5F1EULL, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    const double lr = cfg.lr0 * std::pow(cfg.lr_decay, epoch);
    double loss_sum = 0.0;
    long clamps = 0;

    for (std::size_t start = 0, batch = 0; start < n_items; start += cfg.batch_size, ++batch) {
      const std::size_t b = std::min<std::size_t>(cfg.batch_size, n_items - start);
      std::vector<RVec> grads(b, RVec(n_params));
      std::vector<double> losses(b);
      std::vector<int> clamp_counts(b);
      auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t j = first; j < b; j += stride)
          losses[j] = loss_and_gradient(tapes[first], res.model, data.items[order[start + j]], dft, cfg.eta,
                                        grads[j], &clamp_counts[j]);
      };
      const std::size_t workers = std::min<std::size_t>(threads, b);
      if (workers <= 1) {
        work(0, 1);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
      }

      // Ordered reduction keeps the result independent of scheduling.
      RVec grad(n_params, 0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < b; ++j) {
        batch_loss += losses[j];
        clamps += clamp_counts[j];
        for (std::size_t k = 0; k < n_params; ++k) grad[k] += grads[j][k];
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << ", batch " << batch;
        throw Error(os.str());
      }
      loss_sum += batch_loss;
      const double inv_b = 1.0 / static_cast<double>(b);
      double norm2 = 0.0;
      for (auto& v : grad) {
        v *= inv_b;
        norm2 += v * v;
      }
      if (!std::isfinite(norm2)) {
        std::ostringstream os;
        os << "train: non-finite gradient at epoch " << epoch << ", batch " << batch;
        throw Error(os.str());
      }
      const double norm = std::sqrt(norm2);
      if (norm > cfg.clip_norm)
        for (auto& v : grad) v *= cfg.clip_norm / norm;
      if (res.model.shared) tie_shared(res.model, grad);
      adam.step(theta, grad, lr);
      nn::unflatten(res.model, theta);
    }
    res.log.push_back({epoch, loss_sum / static_cast<double>(n_items), lr, clamps});
  }
  return res;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write training log: " + path.string());
  os << "epoch,mean_loss,lr,clamp_count\n" << std::setprecision(9);
  for (const auto& e : log) os << e.epoch << ',' << e.mean_loss << ',' << e.lr << ',' << e.clamp_count << '\n';
}

}  // namespace lmlvamp::learned
