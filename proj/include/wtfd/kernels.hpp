#pragma once

#include <cstddef>
#include <string>

namespace wtfd::kern {

// Dense inner-loop kernels behind the tensor layer and the wavelet transform.
//
// Every kernel has a portable scalar reference implementation and, on x86-64
// with AVX2+FMA, a vectorized variant. The active variant is chosen once at
// runtime from CPUID; set WTFD_ISA=scalar in the environment to force the
// reference path. SIMD and scalar variants are equivalence-tested against
// each other (see tests/test_kernels.cpp); they agree to float rounding, not
// bit-exactly, because accumulation order differs.

enum class Isa { scalar, avx2 };

// ISA selected for this process (after env override).
Isa active();
const char* isa_name(Isa isa);

// GEMM computes C = op(A) * op(B), row-major, optionally accumulating into C.
// op(A) is A transposed when trans_a is set; A is then stored k x m.
template <class T>
struct Table {
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*sub)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  void (*scale)(const T* x, T alpha, T* out, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);  // y += alpha * x
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
  T (*max)(const T* x, std::size_t n);  // n >= 1
  void (*vexp)(const T* x, T* out, std::size_t n);
  void (*vtanh)(const T* x, T* out, std::size_t n);
  void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, const T* a, const T* b, T* c, bool accumulate);
};

// Dispatched tables (resolved once, thread-safe).
const Table<float>& f32();
const Table<double>& f64();

template <class T>
const Table<T>& table();
template <>
inline const Table<float>& table<float>() {
  return f32();
}
template <>
inline const Table<double>& table<double>() {
  return f64();
}

// Reference kernels; always available, used directly by equivalence tests.
namespace scalar {
template <class T>
const Table<T>& table();
extern template const Table<float>& table<float>();
extern template const Table<double>& table<double>();
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define WTFD_X86_64 1
#else
#define WTFD_X86_64 0
#endif

#if WTFD_X86_64
namespace avx2 {
bool supported();  // CPUID says AVX2 and FMA are present
const Table<float>& table_f32();
const Table<double>& table_f64();
}  // namespace avx2
#endif

}  // namespace wtfd::kern
