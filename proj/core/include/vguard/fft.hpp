#pragma once

#include <complex>
#include <span>
#include <vector>

#include "vguard/common.hpp"

namespace vguard {

constexpr bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_power_of_two(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place radix-2 Cooley-Tukey; size must be a power of two.
// inverse=true applies the 1/N factor.
void fft_inplace(std::span<std::complex<double>> a, bool inverse);

// Forward FFT of a real signal zero-padded to n (power of two).
std::vector<std::complex<double>> fft_real(std::span<const double> x, size_t n);

// Raw autocorrelation r(tau) = sum_n x[n] x[n+tau] for tau in [0, x.size()),
// computed via FFT of the zero-padded signal.
std::vector<double> autocorrelation(std::span<const double> x);

}  // namespace vguard
