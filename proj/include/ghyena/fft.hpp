#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace ghyena {

// Real-input FFT layout: bins 0..floor(n/2), paired re/im arrays.
struct ComplexSpectrum {
  std::vector<double> re;
  std::vector<double> im;
  int64_t n = 0;

  int64_t bins() const { return static_cast<int64_t>(re.size()); }
};

// Forward DFT of a real signal, X_m = sum_j x_j exp(-2*pi*i*j*m/n).
// Power-of-two lengths use the radix-2 transform; other lengths go through
// Bluestein's chirp-z reduction.
ComplexSpectrum rfft(std::span<const double> x);

// Inverse of rfft (includes the 1/n factor); n is the original length.
std::vector<double> irfft(const ComplexSpectrum& spec, int64_t n);

namespace fftdetail {

// In-place complex FFT on arbitrary length, forward (sign -1) or inverse
// (sign +1, normalized by 1/n).
template <class T>
void fft(std::complex<T>* data, int64_t n, bool inverse);

// Real-signal convenience wrappers; out has n/2+1 bins.
template <class T>
void rfft_into(const T* x, int64_t n, std::complex<T>* out);
// Rebuilds the conjugate-symmetric spectrum from n/2+1 bins and inverts.
template <class T>
void irfft_into(const std::complex<T>* spec, int64_t n, T* out);

int64_t next_pow2(int64_t n);

}  // namespace fftdetail

}  // namespace ghyena
