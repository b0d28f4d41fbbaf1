#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace nsbm {

// Deterministic 64-bit RNG (splitmix64). The standard <random> distributions are
// not bit-stable across library implementations, so everything that must be
// reproducible byte-for-byte (sampling, shuffles, weight init) goes through this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1): 53-bit mantissa shifted off zero.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller on the deterministic uniform stream.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Derive an independent child stream from a label; label collisions aside,
  // children of distinct labels are decorrelated.
  Rng derive(std::string_view label) const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
    for (const char c : label) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 1099511628211ULL;
    }
    return Rng(state_ ^ h);
  }

  Rng derive(std::string_view label, std::uint64_t index) const {
    Rng child = derive(label);
    child.state_ ^= 0x9e3779b97f4a7c15ULL * (index + 1);
    return child;
  }

 private:
  std::uint64_t state_;
};

}  // namespace nsbm
