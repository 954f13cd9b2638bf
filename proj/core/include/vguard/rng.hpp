#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace vguard {

// xoshiro256++ seeded through splitmix64.  Every random draw in the project
// goes through this generator so that runs are reproducible byte-for-byte
// and independent of the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  // Independent substream addressed by (seed, path...).  Used to give each
  // account/file/stage its own generator so work can fan out across threads
  // without consuming a shared sequence.
  static Rng derive(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = 0xcbf29ce484222325ull ^ seed;
    h *= 0x100000001b3ull;
    for (uint64_t p : path) {
      h ^= p + 0x9e3779b97f4a7c15ull;
      h *= 0x100000001b3ull;
    }
    return Rng(h);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), n > 0 (Lemire-style rejection).
  uint64_t uniform_int(uint64_t n) {
    assert(n > 0);
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Beta(a, b).  Johnk for a,b <= 1 (the mixup regime), Marsaglia-Tsang
  // gamma ratio otherwise.
  double beta(double a, double b) {
    if (a <= 1.0 && b <= 1.0) {
      for (;;) {
        const double x = std::pow(uniform(), 1.0 / a);
        const double y = std::pow(uniform(), 1.0 / b);
        const double s = x + y;
        if (s > 0.0 && s <= 1.0) return x / s;
      }
    }
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    assert(k <= n);
    std::vector<size_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(uniform_int(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fixed stream tags so substreams never collide across stages.
namespace rng_stream {
constexpr uint64_t kSynth = 0x01;
constexpr uint64_t kPartition = 0x02;
constexpr uint64_t kTrigger = 0x03;
constexpr uint64_t kPoison = 0x04;
constexpr uint64_t kModelInit = 0x05;
constexpr uint64_t kTrain = 0x06;
constexpr uint64_t kFolds = 0x07;
constexpr uint64_t kCalibration = 0x08;
}  // namespace rng_stream

}  // namespace vguard
