#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace metado {

// Deterministic RNG with named substreams. A run is driven by one master
// seed; every consumer derives its own stream from (seed, name, indices) so
// adding a draw in one place never shifts the draws seen elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : _engine(splitmix(seed)) {}

  static std::uint64_t derive(std::uint64_t seed, std::string_view name,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    h = splitmix(h ^ splitmix(seed));
    h = splitmix(h ^ splitmix(a + 0x9e3779b97f4a7c15ull));
    h = splitmix(h ^ splitmix(b + 0x3c6ef372fe94f82bull));
    return h;
  }

  static Rng stream(std::uint64_t seed, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(derive(seed, name, a, b));
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(_engine() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free would bias for huge n; n here is tiny (indices).
    return _engine() % n;
  }

  // Standard normal via Box-Muller; one value per call, spare cached.
  double normal() {
    if (_have_spare) {
      _have_spare = false;
      return _spare;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    _spare = r * std::sin(theta);
    _have_spare = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Log-uniform in [lo, hi], lo > 0.
  double loguniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 _engine;
  double _spare = 0.0;
  bool _have_spare = false;
};

}  // namespace metado
