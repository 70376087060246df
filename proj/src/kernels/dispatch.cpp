#include <atomic>
#include <cstdlib>
#include <string>

#include "mgmlmc/kernels.hpp"

namespace mgmlmc::kernels {
namespace {

const Table* initial_table() {
  if (const char* env = std::getenv("MGMLMC_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return &scalar_table();
    if (v == "avx2" && avx2_available()) return &avx2_table();
  }
  return avx2_available() ? &avx2_table() : &scalar_table();
}

std::atomic<const Table*>& slot() {
  static std::atomic<const Table*> t{initial_table()};
  return t;
}

}  // namespace

const Table& active() { return *slot().load(std::memory_order_acquire); }

void select(Isa isa) {
  slot().store(isa == Isa::avx2 ? &avx2_table() : &scalar_table(), std::memory_order_release);
}

std::string_view name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace mgmlmc::kernels
