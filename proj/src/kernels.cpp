#include "koopcar/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace koopcar::kern {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

#if !defined(KOOPCAR_WITH_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif

const KernelTable& active() {
  static const KernelTable* table = [] {
    if (const char* env = std::getenv("KOOPCAR_KERNELS")) {
      const std::string_view v(env);
      if (v == "scalar") return &scalar_table();
      if (v == "avx2" && avx2_table() != nullptr) return avx2_table();
    }
    if (avx2_supported() && avx2_table() != nullptr) return avx2_table();
    return &scalar_table();
  }();
  return *table;
}

}  // namespace koopcar::kern
