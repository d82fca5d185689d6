#include "lmlvamp/spectrum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

namespace lmlvamp::spectrum {

BandLayout::BandLayout(std::size_t n, std::vector<Band> bands) : n_(n), bands_(std::move(bands)) {
  if (n_ == 0) throw Error("BandLayout: N must be positive");
  for (std::size_t l = 0; l < bands_.size(); ++l) {
    const Band& b = bands_[l];
    if (b.begin > b.end || b.end > n_) {
      std::ostringstream os;
      os << "BandLayout: band " << l << " [" << b.begin << ", " << b.end << ") outside [0, " << n_
         << ")";
      throw Error(os.str());
    }
    for (std::size_t k = 0; k < l; ++k) {
      const Band& o = bands_[k];
      if (b.size() > 0 && o.size() > 0 && b.begin < o.end && o.begin < b.end) {
        std::ostringstream os;
        os << "BandLayout: bands " << k << " and " << l << " overlap";
        throw Error(os.str());
      }
    }
  }
}

std::optional<std::size_t> BandLayout::band_of(std::size_t bin) const {
  for (std::size_t l = 0; l < bands_.size(); ++l)
    if (bands_[l].contains(bin)) return l;
  return std::nullopt;
}

RVec BandLayout::mask(std::size_t l) const {
  RVec m(n_, 0.0);
  const Band& b = band(l);
  std::fill(m.begin() + b.begin, m.begin() + b.end, 1.0);
  return m;
}

double PriorSpec::mean_variance() const {
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

void PriorSpec::validate() const {
  const std::size_t n = layout.n();
  if (mu.size() != n || s.size() != n) throw Error("PriorSpec: mu/S length differs from N");
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = layout.band_of(i);
    if (!std::isfinite(s[i]) || s[i] < 0.0) throw Error("PriorSpec: S must be finite and >= 0");
    if (!l) {
      if (s[i] != 0.0 || mu[i] != Complex{}) {
        std::ostringstream os;
        os << "PriorSpec: nonzero prior outside all bands at bin " << i;
        throw Error(os.str());
      }
      continue;
    }
    if (s[i] != s[layout.band(*l).begin]) throw Error("PriorSpec: S not constant within a band");
  }
}

// ---------------------------------------------------------------------------
// DFT via FFTW. The planner is not thread safe, so plan creation is
// serialized and plans are cached per length for the lifetime of the process.

struct Dft::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  double scale = 1.0;
};

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Dft::Dft(std::size_t n) : n_(n) {
  if (n == 0) throw Error("Dft: length must be positive");
  static std::map<std::size_t, std::shared_ptr<const Plans>> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) {
    plans_ = it->second;
    return;
  }
  auto p = std::make_shared<Plans>();
  std::vector<fftw_complex> a(n), b(n);
  const int len = static_cast<int>(n);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  p->fwd = fftw_plan_dft_1d(len, a.data(), b.data(), FFTW_FORWARD, flags);
  p->bwd = fftw_plan_dft_1d(len, a.data(), b.data(), FFTW_BACKWARD, flags);
  if (!p->fwd || !p->bwd) throw Error("Dft: FFTW planning failed");
  p->scale = 1.0 / std::sqrt(static_cast<double>(n));
  cache.emplace(n, p);
  plans_ = p;
}

namespace {

void execute(fftw_plan plan, double scale, std::size_t n, std::span<const Complex> in,
             std::span<Complex> out) {
  if (in.size() != n || out.size() != n) {
    std::ostringstream os;
    os << "Dft: length mismatch (configured " << n << ", got " << in.size() << " -> "
       << out.size() << ")";
    throw Error(os.str());
  }
  // fftw_execute_dft never writes its input for out-of-place plans.
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  if (src == dst) {
    CVec tmp(in.begin(), in.end());
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(tmp.data()), dst);
  } else {
    fftw_execute_dft(plan, src, dst);
  }
  for (auto& v : out) v *= scale;
}

}  // namespace

void Dft::forward(std::span<const Complex> in, std::span<Complex> out) const {
  execute(plans_->fwd, plans_->scale, n_, in, out);
}

void Dft::inverse(std::span<const Complex> in, std::span<Complex> out) const {
  execute(plans_->bwd, plans_->scale, n_, in, out);
}

CVec Dft::forward(std::span<const Complex> in) const {
  CVec out(n_);
  forward(in, out);
  return out;
}

CVec Dft::inverse(std::span<const Complex> in) const {
  CVec out(n_);
  inverse(in, out);
  return out;
}

// ---------------------------------------------------------------------------

PriorSpec prior_from_ratios(const BandLayout& layout, double snr, double inr, double sigma_a2,
                            bool interferer_known, Rng& rng) {
  if (layout.num_bands() < 2) throw Error("prior_from_scenario: need desired and interferer bands");
  const Band& b0 = layout.band(0);
  const Band& b1 = layout.band(1);
  if (b0.size() == 0 || b1.size() == 0) throw Error("prior_from_scenario: empty band");
  if (snr < 0.0 || inr < 0.0 || sigma_a2 < 0.0) throw Error("prior_from_scenario: negative power");

  const double n = static_cast<double>(layout.n());
  const double s0 = snr * n * sigma_a2 / static_cast<double>(b0.size());
  const double s1 = inr * n * sigma_a2 / static_cast<double>(b1.size());

  PriorSpec prior{layout, CVec(layout.n()), RVec(layout.n(), 0.0)};
  for (std::size_t i = b0.begin; i < b0.end; ++i) prior.s[i] = s0;
  for (std::size_t i = b1.begin; i < b1.end; ++i) {
    if (interferer_known) {
      prior.mu[i] = complex_normal(rng, s1);
    } else {
      prior.s[i] = s1;
    }
  }
  return prior;
}

PriorSpec prior_from_scenario(const BandLayout& layout, double snr_db, double inr_db,
                              double sigma_a2, bool interferer_known, Rng& rng) {
  return prior_from_ratios(layout, db_to_linear(snr_db), db_to_linear(inr_db), sigma_a2,
                           interferer_known, rng);
}

SignalRealization sample_signal(const PriorSpec& prior, const Dft& dft, Rng& rng) {
  const std::size_t n = prior.n();
  if (dft.n() != n) throw Error("sample_signal: DFT length differs from prior");
  SignalRealization sig{CVec(n), CVec(n)};
  for (std::size_t i = 0; i < n; ++i) {
    if (!prior.layout.band_of(i)) continue;
    sig.x[i] = prior.mu[i];
    if (prior.s[i] > 0.0) sig.x[i] += complex_normal(rng, prior.s[i]);
  }
  dft.inverse(sig.x, sig.r);
  return sig;
}

}  // namespace lmlvamp::spectrum
