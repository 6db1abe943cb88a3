#pragma once

#include <cstdint>
#include <random>

namespace specpar {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d49bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG wrapper. Uniform draws are generated directly from the
// mt19937_64 word stream so results are identical across platforms and across
// the serial/concurrent pipeline engines (std::uniform_real_distribution is
// implementation-defined and must not be used here).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform draw in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    std::uint64_t next_word() { return gen_(); }

  private:
    std::mt19937_64 gen_;
};

/// Derives an independent per-(seed, round, lane) stream.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t round, std::uint64_t lane) {
    return Rng(splitmix64(seed ^ splitmix64(round * 4 + lane + 1)));
}

}  // namespace specpar
