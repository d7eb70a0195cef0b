#pragma once

#include <cstdint>
#include <random>

namespace dyadgrow {

// Stream derivation scheme: splitmix64 finalizer over (seed, stream) feeding
// a std::mt19937_64 per stream. Bump the version when the scheme changes so
// recorded seeds stay interpretable.
inline constexpr const char* kRngName = "mt19937_64/splitmix64-streams";
inline constexpr int kRngVersion = 1;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator for sub-stream `stream` of `seed`. Streams never
// overlap in a way that matters here: adding stream k+1 leaves stream k alone.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed ^ 0x5eedULL);
  const std::uint64_t b = splitmix64(a + splitmix64(stream + 0x51ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
  return std::mt19937_64(seq);
}

// Distributions used across the library. std distributions are deterministic
// for a given standard library; that is the scope of the reproducibility promise.
class Rng {
 public:
  explicit Rng(std::mt19937_64 engine) : engine_(engine) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(make_stream(seed, stream)) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dyadgrow
