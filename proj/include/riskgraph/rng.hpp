#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskgraph {

// Deterministic PRNG with explicitly coded sampling transforms.
// Standard-library distributions are implementation-defined, which would break
// the byte-identical reproducibility guarantees, so the transforms
// (uniform via ldexp, normal via Box-Muller, Poisson via inversion) are pinned
// here on top of the well-known SplitMix64/xoshiro-style core.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  // SplitMix64 step: high-quality 64-bit stream, trivially portable.
  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return std::ldexp(double(next_u64() >> 11), -53); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: n == 0");
    // Rejection-free modulo bias is negligible for our n << 2^64, but use
    // rejection anyway so results are exactly uniform.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + int(uniform_index(uint64_t(hi - lo + 1)));
  }

  // Standard normal via Box-Muller (both values used for efficiency).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Truncated normal by rejection with a clamp fallback after 64 draws (the
  // fallback only triggers for bounds far in the tail).
  double truncated_normal(double mean, double stddev, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("truncated_normal: lo > hi");
    if (stddev <= 0.0) return std::min(hi, std::max(lo, mean));
    for (int i = 0; i < 64; ++i) {
      double v = normal(mean, stddev);
      if (v >= lo && v <= hi) return v;
    }
    return std::min(hi, std::max(lo, normal(mean, stddev)));
  }

  // Poisson by inversion (Knuth). Adequate for the small lambdas used here.
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    double l = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > l);
    return k - 1;
  }

  // Categorical index from (unnormalized) non-negative weights.
  size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("categorical: negative weight");
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("categorical: zero total weight");
    double x = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (x < acc) return i;
    }
    return weights.size() - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a for deriving independent sub-streams from (seed, label) pairs.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline Rng sub_rng(uint64_t seed, const std::string& label) {
  return Rng(seed ^ fnv1a64(label));
}

}  // namespace riskgraph
