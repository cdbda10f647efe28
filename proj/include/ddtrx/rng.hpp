#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace ddtrx {

struct RngSeed {
  std::uint64_t value = 0;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of substream `stream` under `seed`. Pure function of its inputs, so
// shard i of a run is reproducible no matter which worker generates it.
inline constexpr RngSeed derive_seed(RngSeed seed, std::uint64_t stream) {
  return RngSeed{splitmix64(splitmix64(seed.value) ^ splitmix64(stream + 0x632be59bd9b4e019ULL))};
}

class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(RngSeed seed) {
    std::array<std::uint32_t, 8> words{};
    std::uint64_t s = seed.value;
    for (std::size_t i = 0; i < words.size(); i += 2) {
      s = splitmix64(s);
      words[i] = static_cast<std::uint32_t>(s);
      words[i + 1] = static_cast<std::uint32_t>(s >> 32);
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
  }

  static Rng substream(RngSeed seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
      if (u > 0.0) return u;
    }
  }

  double normal() { return normal_(engine_); }

  // Gamma with shape/rate parameterization.
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }

  // Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ddtrx
