#pragma once

#include <cstdint>

#include "specpar/rng.hpp"

namespace specpar {

// Inputs to the closed-form speedup model. amt, e_ld and e_bonus are measured
// quantities plugged in from run traces; there is no closed form for them.
struct TheoryParams {
    double alpha = 0.0;   // per-token acceptance rate
    int gamma = 1;        // draft length per round
    double c = 1.0;       // speed ratio: target forward time / draft forward time
    double amt = 0.0;     // average matched tokens per retrieval forward
    double e_ld = 0.0;    // expected draft-side accepted tokens per episode
    double e_bonus = 0.0; // expected guidance bonus tokens per episode
};

/// Expected tokens from one draft-verify round: (1 - a^(g+1)) / (1 - a),
/// with the a -> 1 limit g+1.
double expected_single_round(double alpha, int gamma);

/// Expected rounds until the first rejection: 1 / (1 - a^g). Errors at a = 1
/// where no rejection ever occurs.
double expected_rounds(double alpha, int gamma);

/// Expected tokens across an episode of k rounds: (k-1)(g+1) + single-round.
double expected_multi_round(double alpha, int gamma);

/// Serial speculative decoding: E[L_k] * C / (k * (g + C)).
double speedup_sd(double alpha, int gamma, double c);

/// Pipelined (draft-when-verify): (E[L_k] - k + 1) * C / (k * g + C),
/// upper bounded by k*g*C / (k*g + C) <= C.
double speedup_psd(double alpha, int gamma, double c);

/// Retrieval-boosted pipeline: the speed ratio scales to C' = C * (1 + AMT),
/// giving (E[L_d] + E[L_bonus]) * C' / (k * g + C').
double speedup_double(const TheoryParams& params, double k, int gamma);

struct McEstimates {
    double e_single = 0.0;
    double e_rounds = 0.0;
    double e_multi = 0.0;
};

/// Brute-force oracle for the three expectations above, simulating Bernoulli
/// acceptance streams under the episode model the formulas assume: an episode
/// runs a geometric number of fully accepted rounds and closes with an
/// independent single-round draw.
McEstimates mc_oracle(double alpha, int gamma, long trials, std::uint64_t seed);

/// Discrete-event episode simulations of the serial and pipelined schedulers
/// under the latency model; return simulated speedup.
double sim_sd(double alpha, int gamma, double c, long episodes, std::uint64_t seed);
double sim_psd(double alpha, int gamma, double c, long episodes, std::uint64_t seed);

}  // namespace specpar
