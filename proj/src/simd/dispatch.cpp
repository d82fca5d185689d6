#include <atomic>
#include <cstdlib>

#include "simd/tables.hpp"

namespace lmlvamp::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  return std::nullopt;
}

const KernelTable* kernels_for(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return &detail::scalar_table();
    case Isa::kAvx2:
#if defined(LMLVAMP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return &detail::avx2_table();
#endif
      return nullptr;
  }
  return nullptr;
}

namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("LMLVAMP_ISA")) {
    if (auto isa = parse_isa(env))
      if (const KernelTable* t = kernels_for(*isa)) return t;
  }
  if (const KernelTable* t = kernels_for(Isa::kAvx2)) return t;
  return kernels_for(Isa::kScalar);
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

const KernelTable& kernels() { return *current().load(std::memory_order_relaxed); }

void force(Isa isa) {
  if (const KernelTable* t = kernels_for(isa)) current().store(t);
}

Isa active_isa() { return kernels().isa; }

}  // namespace lmlvamp::simd
