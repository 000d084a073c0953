#include <cstdlib>
#include <string_view>

#include "oir/kernels.hpp"

namespace oir::simd {

namespace {

const KernelTable& select() {
  if (const char* forced = std::getenv("OIR_SIMD"); forced && std::string_view(forced) == "scalar") {
    return scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace oir::simd
