#include "ghyena/fft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "ghyena/error.hpp"

namespace ghyena {
namespace fftdetail {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Cached tables for one power-of-two length: forward twiddles and the
// bit-reversal permutation.
template <class T>
struct Pow2Plan {
  int64_t n;
  std::vector<std::complex<T>> twiddle;  // exp(-2*pi*i*k/n), k < n/2
  std::vector<uint32_t> rev;

  explicit Pow2Plan(int64_t len) : n(len), twiddle(static_cast<size_t>(len / 2)), rev(static_cast<size_t>(len)) {
    for (int64_t k = 0; k < n / 2; ++k) {
      double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[static_cast<size_t>(k)] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
    }
    int bits = 0;
    while ((int64_t{1} << bits) < n) ++bits;
    for (int64_t i = 0; i < n; ++i) {
      uint32_t r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (int64_t{1} << b)) r |= 1u << (bits - 1 - b);
      rev[static_cast<size_t>(i)] = r;
    }
  }
};

// Bluestein tables for one arbitrary length: the chirp and the padded,
// pre-transformed kernel.
template <class T>
struct BluesteinPlan {
  int64_t n;
  int64_t m;  // padded power-of-two length >= 2n-1
  std::vector<std::complex<T>> chirp;   // w_j = exp(-i*pi*j^2/n)
  std::vector<std::complex<T>> kernel;  // FFT_m of b, b_j = conj(w_|j|)

  explicit BluesteinPlan(int64_t len);
};

template <class T>
struct PlanCache {
  std::mutex mu;
  std::map<int64_t, std::shared_ptr<const Pow2Plan<T>>> pow2;
  std::map<int64_t, std::shared_ptr<const BluesteinPlan<T>>> bluestein;
};

template <class T>
PlanCache<T>& cache() {
  static PlanCache<T> c;
  return c;
}

template <class T>
std::shared_ptr<const Pow2Plan<T>> pow2_plan(int64_t n) {
  auto& c = cache<T>();
  {
    std::lock_guard<std::mutex> lock(c.mu);
    auto it = c.pow2.find(n);
    if (it != c.pow2.end()) return it->second;
  }
  auto plan = std::make_shared<const Pow2Plan<T>>(n);
  std::lock_guard<std::mutex> lock(c.mu);
  return c.pow2.emplace(n, plan).first->second;
}

template <class T>
std::shared_ptr<const BluesteinPlan<T>> bluestein_plan(int64_t n);

template <class T>
void fft_pow2(std::complex<T>* a, int64_t n, bool inverse) {
  if (n == 1) return;
  auto plan = pow2_plan<T>(n);
  const auto& rev = plan->rev;
  for (int64_t i = 0; i < n; ++i) {
    auto r = static_cast<int64_t>(rev[static_cast<size_t>(i)]);
    if (i < r) std::swap(a[i], a[r]);
  }
  const auto& tw = plan->twiddle;
  for (int64_t len = 2; len <= n; len <<= 1) {
    int64_t half = len >> 1;
    int64_t step = n / len;
    for (int64_t start = 0; start < n; start += len) {
      for (int64_t k = 0; k < half; ++k) {
        std::complex<T> w = tw[static_cast<size_t>(k * step)];
        if (inverse) w = std::conj(w);
        std::complex<T> u = a[start + k];
        std::complex<T> v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    T inv = T(1) / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) a[i] *= inv;
  }
}

template <class T>
BluesteinPlan<T>::BluesteinPlan(int64_t len) : n(len) {
  m = next_pow2(2 * n - 1);
  chirp.resize(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) {
    // j^2 mod 2n keeps the phase argument small for large lengths.
    int64_t j2 = (j * j) % (2 * n);
    double a = -kPi * static_cast<double>(j2) / static_cast<double>(n);
    chirp[static_cast<size_t>(j)] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
  }
  std::vector<std::complex<T>> b(static_cast<size_t>(m), std::complex<T>(0, 0));
  for (int64_t j = 0; j < n; ++j) {
    std::complex<T> c = std::conj(chirp[static_cast<size_t>(j)]);
    b[static_cast<size_t>(j)] = c;
    if (j != 0) b[static_cast<size_t>(m - j)] = c;
  }
  fft_pow2<T>(b.data(), m, false);
  kernel = std::move(b);
}

template <class T>
std::shared_ptr<const BluesteinPlan<T>> bluestein_plan(int64_t n) {
  auto& c = cache<T>();
  {
    std::lock_guard<std::mutex> lock(c.mu);
    auto it = c.bluestein.find(n);
    if (it != c.bluestein.end()) return it->second;
  }
  // built outside the lock; the constructor itself needs pow2 plans
  auto plan = std::make_shared<const BluesteinPlan<T>>(n);
  std::lock_guard<std::mutex> lock(c.mu);
  return c.bluestein.emplace(n, plan).first->second;
}

template <class T>
void fft_bluestein(std::complex<T>* a, int64_t n, bool inverse) {
  auto plan = bluestein_plan<T>(n);
  int64_t m = plan->m;
  std::vector<std::complex<T>> work(static_cast<size_t>(m), std::complex<T>(0, 0));
  for (int64_t j = 0; j < n; ++j) {
    std::complex<T> w = plan->chirp[static_cast<size_t>(j)];
    if (inverse) w = std::conj(w);
    work[static_cast<size_t>(j)] = a[j] * w;
  }
  fft_pow2<T>(work.data(), m, false);
  if (!inverse) {
    for (int64_t j = 0; j < m; ++j) work[static_cast<size_t>(j)] *= plan->kernel[static_cast<size_t>(j)];
  } else {
    for (int64_t j = 0; j < m; ++j) work[static_cast<size_t>(j)] *= std::conj(plan->kernel[static_cast<size_t>(j)]);
  }
  fft_pow2<T>(work.data(), m, true);
  T scale = inverse ? T(1) / static_cast<T>(n) : T(1);
  for (int64_t k = 0; k < n; ++k) {
    std::complex<T> w = plan->chirp[static_cast<size_t>(k)];
    if (inverse) w = std::conj(w);
    a[k] = work[static_cast<size_t>(k)] * w * scale;
  }
}

}  // namespace

int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

template <class T>
void fft(std::complex<T>* data, int64_t n, bool inverse) {
  if (n <= 0) fail_invalid("fft: empty signal");
  if ((n & (n - 1)) == 0)
    fft_pow2<T>(data, n, inverse);
  else
    fft_bluestein<T>(data, n, inverse);
}

template <class T>
void rfft_into(const T* x, int64_t n, std::complex<T>* out) {
  std::vector<std::complex<T>> buf(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = {x[i], T(0)};
  fft<T>(buf.data(), n, false);
  int64_t bins = n / 2 + 1;
  for (int64_t i = 0; i < bins; ++i) out[i] = buf[static_cast<size_t>(i)];
}

template <class T>
void irfft_into(const std::complex<T>* spec, int64_t n, T* out) {
  std::vector<std::complex<T>> buf(static_cast<size_t>(n));
  int64_t bins = n / 2 + 1;
  for (int64_t i = 0; i < bins; ++i) buf[static_cast<size_t>(i)] = spec[i];
  for (int64_t i = bins; i < n; ++i) buf[static_cast<size_t>(i)] = std::conj(spec[n - i]);
  fft<T>(buf.data(), n, true);
  for (int64_t i = 0; i < n; ++i) out[i] = buf[static_cast<size_t>(i)].real();
}

template void fft<double>(std::complex<double>*, int64_t, bool);
template void fft<float>(std::complex<float>*, int64_t, bool);
template void rfft_into<double>(const double*, int64_t, std::complex<double>*);
template void rfft_into<float>(const float*, int64_t, std::complex<float>*);
template void irfft_into<double>(const std::complex<double>*, int64_t, double*);
template void irfft_into<float>(const std::complex<float>*, int64_t, float*);

}  // namespace fftdetail

ComplexSpectrum rfft(std::span<const double> x) {
  if (x.empty()) fail_invalid("rfft: empty signal");
  int64_t n = static_cast<int64_t>(x.size());
  std::vector<std::complex<double>> bins(static_cast<size_t>(n / 2 + 1));
  fftdetail::rfft_into<double>(x.data(), n, bins.data());
  ComplexSpectrum spec;
  spec.n = n;
  spec.re.resize(bins.size());
  spec.im.resize(bins.size());
  for (size_t i = 0; i < bins.size(); ++i) {
    spec.re[i] = bins[i].real();
    spec.im[i] = bins[i].imag();
  }
  return spec;
}

std::vector<double> irfft(const ComplexSpectrum& spec, int64_t n) {
  if (n <= 0) fail_invalid("irfft: empty signal");
  if (spec.bins() != n / 2 + 1) fail_invalid("irfft: bin count does not match length");
  std::vector<std::complex<double>> bins(static_cast<size_t>(spec.bins()));
  for (size_t i = 0; i < bins.size(); ++i) bins[i] = {spec.re[i], spec.im[i]};
  std::vector<double> out(static_cast<size_t>(n));
  fftdetail::irfft_into<double>(bins.data(), n, out.data());
  return out;
}

}  // namespace ghyena
