#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lmlvamp/common.hpp"
#include "lmlvamp/rng.hpp"

namespace lmlvamp::spectrum {

// Half-open interval of frequency bins [begin, end).
struct Band {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t bin) const { return bin >= begin && bin < end; }
};

// N bins partitioned into pairwise disjoint source bands. Band 0 is the
// desired user; band 1 (when present) is the interferer.
class BandLayout {
 public:
  BandLayout(std::size_t n, std::vector<Band> bands);

  std::size_t n() const { return n_; }
  std::size_t num_bands() const { return bands_.size(); }
  const Band& band(std::size_t l) const { return bands_.at(l); }
  const std::vector<Band>& bands() const { return bands_; }

  // Index of the band that owns `bin`, if any.
  std::optional<std::size_t> band_of(std::size_t bin) const;
  // 0/1 indicator of band l over all N bins.
  RVec mask(std::size_t l) const;

 private:
  std::size_t n_;
  std::vector<Band> bands_;
};

// Per-bin Gaussian prior x[i] ~ CN(mu[i], S[i]); both are zero off-band and
// S is constant within each band.
struct PriorSpec {
  BandLayout layout;
  CVec mu;
  RVec s;

  std::size_t n() const { return layout.n(); }
  // <S>, the empirical mean of the variance profile.
  double mean_variance() const;
  // Throws Error if the invariants above are violated.
  void validate() const;
};

struct SignalRealization {
  CVec x;  // frequency domain
  CVec r;  // time domain, r = V^H x
};

// Unitary DFT pair of a fixed length. forward() applies V (1/sqrt(N)
// normalization), inverse() applies V^H. Instances are cheap to copy.
class Dft {
 public:
  explicit Dft(std::size_t n);

  std::size_t n() const { return n_; }
  void forward(std::span<const Complex> in, std::span<Complex> out) const;
  void inverse(std::span<const Complex> in, std::span<Complex> out) const;
  CVec forward(std::span<const Complex> in) const;
  CVec inverse(std::span<const Complex> in) const;

 private:
  struct Plans;
  std::size_t n_;
  std::shared_ptr<const Plans> plans_;
};

// Builds the two-source prior for a scenario given in dB ratios relative to
// sigma_a2. With interferer_known, one interferer realization is drawn into
// mu over band 1 and its variance is zeroed.
PriorSpec prior_from_scenario(const BandLayout& layout, double snr_db, double inr_db,
                              double sigma_a2, bool interferer_known, Rng& rng);

// Same, from linear power ratios. A ratio of exactly zero gives a zero band.
PriorSpec prior_from_ratios(const BandLayout& layout, double snr, double inr, double sigma_a2,
                            bool interferer_known, Rng& rng);

// Draws x ~ CN(mu, diag(S)) and its time-domain image r.
SignalRealization sample_signal(const PriorSpec& prior, const Dft& dft, Rng& rng);

// Circular complex normal sample with total variance `var`.
inline Complex complex_normal(Rng& rng, double var) {
  const double scale = std::sqrt(0.5 * var);
  const double re = rng.normal();
  const double im = rng.normal();
  return {scale * re, scale * im};
}

}  // namespace lmlvamp::spectrum
