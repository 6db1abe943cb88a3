#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace specpar {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Reserved token ids. BOS pads short contexts on the left; EOS (vocab_size - 1)
// terminates generation when committed.
inline constexpr TokenId kBosToken = 0;

using ProbVector = std::vector<double>;

/// Simulated wall clock in abstract time units.
struct SimClock {
    double now = 0.0;
    void charge(double cost) { now += cost; }
};

inline void check_prob_vector(const ProbVector& p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw std::invalid_argument("probability entry < 0");
        sum += v;
    }
    if (sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9) {
        throw std::invalid_argument("probability vector does not sum to 1");
    }
}

}  // namespace specpar
