#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace echoview {

// Small self-contained generator (splitmix64). Every random draw in the
// project flows from one user seed through derive_stream(), so reruns are
// bit-identical and parallel workers can own independent streams.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased enough at desk scale
  uint64_t below(uint64_t n) { return n ? next() % n : 0; }

  bool coin() { return (next() & 1) != 0; }

  // Box-Muller; two fresh uniforms per draw keeps the stream stateless.
  double gauss() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<size_t> permutation(size_t n) {
    std::vector<size_t> p(n);
    for (size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  uint64_t state_;
};

// Mixes a seed with a list of tags into an independent stream key.
inline uint64_t derive_stream(uint64_t seed, std::initializer_list<uint64_t> tags) {
  uint64_t h = seed ^ 0x2545f4914f6cdd1dull;
  for (uint64_t t : tags) {
    h ^= t + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
  }
  return h;
}

inline Rng derive_rng(uint64_t seed, std::initializer_list<uint64_t> tags) {
  return Rng(derive_stream(seed, tags));
}

}  // namespace echoview
