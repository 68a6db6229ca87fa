#include <atomic>
#include <cstdlib>
#include <string_view>

#include "pdet/kernels/kernels.hpp"

namespace pdet::kernels {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("PDET_KERNELS")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  if (cpu_has_avx2() && avx2_table() != nullptr) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) {
  slot().store(&table, std::memory_order_release);
}

}  // namespace pdet::kernels
