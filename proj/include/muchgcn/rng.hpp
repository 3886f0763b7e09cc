#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace muchgcn {

/// Deterministic random stream. Every consumer derives a named child stream
/// from its parent so the draw order of one component never perturbs another;
/// the same (seed, name path) always reproduces the same sequence. Uniform and
/// normal variates are generated from raw engine words directly (instead of
/// std::distribution types, whose output is implementation-defined) so results
/// are stable across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(splitmix(seed)), gen_(seed_) {}

  /// Child stream keyed by name; independent of draws made on the parent.
  Rng stream(std::string_view name) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a over the name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return Rng(seed_ ^ h);
  }

  /// Child stream keyed by name and index (e.g. per fold, per epoch).
  Rng stream(std::string_view name, uint64_t index) const {
    return stream(name).stream_at(index);
  }

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Fisher-Yates shuffle (std::shuffle leaves the draw sequence unspecified).
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(v[i], v[j]);
    }
  }

 private:
  Rng stream_at(uint64_t index) const { return Rng(seed_ ^ (0x9e3779b97f4a7c15ull * (index + 1))); }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  uint64_t seed_ = 0;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace muchgcn
