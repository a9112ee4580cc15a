#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace tie {

// splitmix64 step; used only to spread a master seed into per-purpose seeds.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stable stream ids. Every consumer of randomness pulls from its own stream,
// so adding or removing draws in one stage never shifts another stage.
namespace stream {
constexpr std::uint64_t classifier_init = 1;
constexpr std::uint64_t generator_init = 2;
constexpr std::uint64_t garbage_noise = 3;
constexpr std::uint64_t train_shuffle = 4;   // + epoch index
constexpr std::uint64_t soft_conditions = 5; // + epoch index
constexpr std::uint64_t synth_data = 6;
constexpr std::uint64_t misc = 7;
constexpr std::uint64_t generation = 8;      // + epoch index
}  // namespace stream

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id,
                                 std::uint64_t index = 0) {
  std::uint64_t s = master;
  splitmix64_next(s);
  s ^= (stream_id + 0x100) * 0x9e3779b97f4a7c15ull;
  splitmix64_next(s);
  s ^= (index + 1) * 0x94d049bb133111ebull;
  return splitmix64_next(s);
}

// Deterministic double-precision RNG over mt19937_64. Gaussians come from a
// hand-rolled Box-Muller transform with spare caching so the draw sequence is
// identical on every platform (std::normal_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // uniform in [0,1) with 53 random bits
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; second value of each pair is cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

  // Fisher-Yates
  template <class Vec>
  void shuffle(Vec& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i + 1));
      using std::swap;
      swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tie
