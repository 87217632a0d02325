#pragma once

// Internal numeric kernels shared by the tape ops. Everything is
// single-threaded and deterministic; loops are written so the compiler can
// vectorize them.

#include <cmath>
#include <cstdint>
#include <cstring>

#include "ghyena/tensor.hpp"

namespace ghyena::kern {

// exp with ~1e-13 relative accuracy, branch-free in the common range so the
// surrounding loops can vectorize. Inputs are clamped to the finite range.
inline double fast_exp(double x) {
  constexpr double kLog2e = 1.4426950408889634073599246810019;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  if (std::isnan(x)) return x;
  if (x > 708.0) x = 708.0;
  if (x < -708.0) x = -708.0;
  double kd = std::nearbyint(x * kLog2e);
  double r = x - kd * kLn2Hi;
  r -= kd * kLn2Lo;
  // Taylor series for e^r on |r| <= ln(2)/2.
  double p = 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  auto k = static_cast<int64_t>(kd);
  uint64_t bits;
  std::memcpy(&bits, &p, 8);
  bits += static_cast<uint64_t>(k) << 52;
  double out;
  std::memcpy(&out, &bits, 8);
  return out;
}

template <class T>
inline T sigmoid_scalar(T x) {
  double e = fast_exp(-std::abs(static_cast<double>(x)));
  double s = e / (1.0 + e);
  return static_cast<T>(x >= T(0) ? 1.0 - s : s);
}

// C(m,n) += or = A(m,k) * B(k,n), row-major.
template <class T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void transpose(const T* a, T* out, int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
}

// Elementwise binary with trailing-shape broadcast: the smaller operand's
// element count must divide the larger's, having been validated as a shape
// suffix by the caller. Row-major layout makes the mapping i % numel(small).
template <class T, class F>
void broadcast_binary(const T* a, int64_t na, const T* b, int64_t nb, T* out, F&& f) {
  if (na == nb) {
    for (int64_t i = 0; i < na; ++i) out[i] = f(a[i], b[i]);
  } else if (nb < na) {
    for (int64_t i = 0; i < na; ++i) out[i] = f(a[i], b[i % nb]);
  } else {
    for (int64_t i = 0; i < nb; ++i) out[i] = f(a[i % na], b[i]);
  }
}

// Accumulate a gradient of the broadcast output back onto an operand of
// numel nsmall (suffix broadcast).
template <class T>
void reduce_broadcast_grad(const T* g, int64_t ng, T* acc, int64_t nsmall) {
  if (ng == nsmall) {
    for (int64_t i = 0; i < ng; ++i) acc[i] += g[i];
  } else {
    for (int64_t i = 0; i < ng; ++i) acc[i % nsmall] += g[i];
  }
}

}  // namespace ghyena::kern
