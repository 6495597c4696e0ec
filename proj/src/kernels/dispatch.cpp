#include <cstdlib>
#include <string_view>

#include "mixcox/kernels.hpp"

namespace mixcox::kernels {

#ifdef MIXCOX_HAVE_AVX2
const KernelTable& avx2_table_unchecked();

const KernelTable* avx2_table() {
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table_unchecked() : nullptr;
}
#else
const KernelTable* avx2_table() { return nullptr; }
#endif

const KernelTable& active() {
  static const KernelTable& chosen = [&]() -> const KernelTable& {
    const char* env = std::getenv("MIXCOX_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
  }();
  return chosen;
}

}  // namespace mixcox::kernels
