#include <cmath>
#include <cstddef>

#include "wtfd/kernels.hpp"

namespace wtfd::kern::scalar {

namespace {

template <class T>
void add_(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub_(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul_(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void scale_(const T* x, T alpha, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class T>
void axpy_(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
T dot_(const T* a, const T* b, std::size_t n) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T sum_(const T* x, std::size_t n) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
T max_(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

template <class T>
void vexp_(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

template <class T>
void vtanh_(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

// Row-major GEMM. Loop orders keep the innermost accesses contiguous for the
// NN / NT / TN cases; TT falls back to a plain triple loop.
template <class T>
void gemm_(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
           std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = T{0};
  }
  if (!trans_a && !trans_b) {
    // a: m x k, b: k x n
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        T av = a[i * k + p];
        const T* brow = b + p * n;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  } else if (!trans_a && trans_b) {
    // a: m x k, b: n x k
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        c[i * n + j] += dot_(a + i * k, b + j * k, k);
  } else if (trans_a && !trans_b) {
    // a: k x m, b: k x n
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) {
        T av = a[p * m + i];
        const T* brow = b + p * n;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  } else {
    // a: k x m, b: n x k
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        T acc{0};
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

template <class T>
Table<T> make_table() {
  Table<T> t;
  t.add = add_<T>;
  t.sub = sub_<T>;
  t.mul = mul_<T>;
  t.scale = scale_<T>;
  t.axpy = axpy_<T>;
  t.dot = dot_<T>;
  t.sum = sum_<T>;
  t.max = max_<T>;
  t.vexp = vexp_<T>;
  t.vtanh = vtanh_<T>;
  t.gemm = gemm_<T>;
  return t;
}

}  // namespace

template <class T>
const Table<T>& table() {
  static const Table<T> t = make_table<T>();
  return t;
}

template const Table<float>& table<float>();
template const Table<double>& table<double>();

}  // namespace wtfd::kern::scalar
