#pragma once

#include <optional>

#include "specpar/model.hpp"
#include "specpar/types.hpp"

namespace specpar {

// Target-retrieved chain used for multi-token pre-verify and forward guidance:
// matched_len accepted candidates plus one correction token, with the target
// distribution at every position.
struct GuidanceChain {
    TokenSeq tokens;
    std::vector<ProbVector> probs;
    int matched_len = 0;
};

enum class VerifyKind { AllAccepted, Correction, Extension, ResidualCorrection };

const char* to_string(VerifyKind k);

struct VerifyOutcome {
    int accepted_len = 0;
    TokenSeq committed;
    VerifyKind kind = VerifyKind::AllAccepted;
};

/// min(1, p[x]/q[x]); throws when the draft put no mass on x.
double accept_prob(const ProbVector& p, const ProbVector& q, TokenId x);

/// Draw from norm(max(0, p - q)); throws when the residual is identically zero.
TokenId residual_sample(const ProbVector& p, const ProbVector& q, Rng& rng);

/// Residual for a point-mass proposal on `x`: p with p[x] removed, renormalized.
TokenId residual_sample_point_mass(const ProbVector& p, TokenId x, Rng& rng);

/// First rejected position in the draft slice, or nullopt when all accepted.
/// Greedy compares against the target argmax; stochastic runs one acceptance
/// draw per position (consumed only up to the first reject).
std::optional<int> verify_against_target(std::span<const TokenId> draft_tokens,
                                         std::span<const ProbVector> draft_probs,
                                         std::span<const ProbVector> target_probs,
                                         const SamplerConfig& cfg, Rng& rng);

/// Combines the verified draft prefix with the target guidance per the
/// correction/extension rule. Greedy keeps the guidance tail; stochastic
/// replaces the rejected token with a residual draw and discards the tail.
VerifyOutcome guided_output(std::span<const TokenId> draft_tokens,
                            std::span<const ProbVector> draft_probs,
                            const GuidanceChain& guidance,
                            std::optional<int> first_reject,
                            const SamplerConfig& cfg, Rng& rng);

}  // namespace specpar
