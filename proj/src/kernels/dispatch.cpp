#include "wtfd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace wtfd::kern {

namespace {

Isa pick() {
  const char* env = std::getenv("WTFD_ISA");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::scalar;
#if WTFD_X86_64
  if (avx2::supported()) return Isa::avx2;
#endif
  return Isa::scalar;
}

}  // namespace

Isa active() {
  static const Isa isa = pick();
  return isa;
}

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::avx2: return "avx2";
    default: return "scalar";
  }
}

const Table<float>& f32() {
#if WTFD_X86_64
  if (active() == Isa::avx2) return avx2::table_f32();
#endif
  return scalar::table<float>();
}

const Table<double>& f64() {
#if WTFD_X86_64
  if (active() == Isa::avx2) return avx2::table_f64();
#endif
  return scalar::table<double>();
}

}  // namespace wtfd::kern
