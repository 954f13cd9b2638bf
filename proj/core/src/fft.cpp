#include "vguard/fft.hpp"

#include <cmath>
#include <unordered_map>

namespace vguard {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Twiddle tables per size, cached per thread so concurrent workers never
// contend.  Table k holds exp(-2*pi*i*k/n) for k < n/2.
const std::vector<std::complex<double>>& twiddles(size_t n) {
  thread_local std::unordered_map<size_t, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> t(n / 2);
  for (size_t k = 0; k < n / 2; ++k) {
    const double ang = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    t[k] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(t)).first->second;
}

}  // namespace

void fft_inplace(std::span<std::complex<double>> a, bool inverse) {
  const size_t n = a.size();
  if (n == 0) return;
  if (!is_power_of_two(n)) throw Error("fft: size " + std::to_string(n) + " is not a power of two");
  if (n == 1) return;

  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const auto& tw = twiddles(n);
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t step = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> w = tw[k * step];
        if (inverse) w = std::conj(w);
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

std::vector<std::complex<double>> fft_real(std::span<const double> x, size_t n) {
  if (x.size() > n) throw Error("fft_real: signal longer than transform size");
  std::vector<std::complex<double>> a(n);
  for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft_inplace(a, false);
  return a;
}

std::vector<double> autocorrelation(std::span<const double> x) {
  const size_t n = x.size();
  if (n == 0) return {};
  const size_t m = next_power_of_two(2 * n);
  auto a = fft_real(x, m);
  for (auto& v : a) v = {std::norm(v), 0.0};
  fft_inplace(a, true);
  std::vector<double> r(n);
  for (size_t i = 0; i < n; ++i) r[i] = a[i].real();
  return r;
}

}  // namespace vguard
