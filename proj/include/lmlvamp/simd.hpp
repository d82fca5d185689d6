#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

namespace lmlvamp::simd {

// Data-parallel kernels for the per-sample MLPs. Batches use a
// structure-of-arrays layout: feature f of sample i lives at x[f * n + i].
// Every kernel has a scalar reference implementation; vector variants are
// selected at runtime and tested for equivalence against it.

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

// Non-owning view of a two-layer network: y = W2 sigmoid(W1 x + b1) + b2.
// Weight matrices are row-major.
struct MlpView {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  const double* w1 = nullptr;  // hidden x in
  const double* b1 = nullptr;  // hidden
  const double* w2 = nullptr;  // out x hidden
  const double* b2 = nullptr;  // out
};

// Gradient sinks; kernels accumulate (+=) into these.
struct MlpGrad {
  double* w1 = nullptr;
  double* b1 = nullptr;
  double* w2 = nullptr;
  double* b2 = nullptr;
};

inline constexpr std::size_t kMaxMlpPorts = 8;  // bound on `in` and `out`

struct KernelTable {
  Isa isa;
  // hidden (hidden * n doubles) keeps the activations for mlp_backward of the
  // same table; its layout is private to the table.
  void (*mlp_forward)(const MlpView& w, const double* x, std::size_t n, double* hidden,
                      double* y);
  // dx (in x n) is written when non-null.
  void (*mlp_backward)(const MlpView& w, const double* x, const double* hidden, const double* dy,
                       std::size_t n, const MlpGrad& g, double* dx);
  void (*sigmoid)(const double* z, std::size_t n, double* out);
  void (*exp)(const double* z, std::size_t n, double* out);
};

// Table for `isa`, or nullptr if the build or the CPU lacks it.
const KernelTable* kernels_for(Isa isa);

// Best available table, overridable with LMLVAMP_ISA=scalar|avx2 or force().
const KernelTable& kernels();
void force(Isa isa);
Isa active_isa();

}  // namespace lmlvamp::simd
