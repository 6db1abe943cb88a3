#include "specpar/verification.hpp"

#include <algorithm>

namespace specpar {

const char* to_string(VerifyKind k) {
    switch (k) {
        case VerifyKind::AllAccepted: return "all_accepted";
        case VerifyKind::Correction: return "correction";
        case VerifyKind::Extension: return "extension";
        case VerifyKind::ResidualCorrection: return "residual_correction";
    }
    return "?";
}

double accept_prob(const ProbVector& p, const ProbVector& q, TokenId x) {
    const double qx = q[static_cast<size_t>(x)];
    if (qx <= 0.0) throw std::invalid_argument("draft mass zero on emitted token");
    return std::min(1.0, p[static_cast<size_t>(x)] / qx);
}

namespace {

TokenId sample_from(const ProbVector& weights, double total, Rng& rng) {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    TokenId last_positive = -1;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        last_positive = static_cast<TokenId>(i);
        acc += weights[i];
        if (u < acc) return last_positive;
    }
    return last_positive;
}

}  // namespace

TokenId residual_sample(const ProbVector& p, const ProbVector& q, Rng& rng) {
    ProbVector res(p.size());
    double total = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        res[i] = std::max(0.0, p[i] - q[i]);
        total += res[i];
    }
    if (total <= 0.0) throw std::runtime_error("residual distribution is zero");
    return sample_from(res, total, rng);
}

TokenId residual_sample_point_mass(const ProbVector& p, TokenId x, Rng& rng) {
    ProbVector res = p;
    res[static_cast<size_t>(x)] = 0.0;
    double total = 0.0;
    for (double v : res) total += v;
    if (total <= 0.0) throw std::runtime_error("residual distribution is zero");
    return sample_from(res, total, rng);
}

std::optional<int> verify_against_target(std::span<const TokenId> draft_tokens,
                                         std::span<const ProbVector> draft_probs,
                                         std::span<const ProbVector> target_probs,
                                         const SamplerConfig& cfg, Rng& rng) {
    if (target_probs.size() < draft_tokens.size()) {
        throw std::invalid_argument("target_probs does not cover the draft slice");
    }
    for (size_t k = 0; k < draft_tokens.size(); ++k) {
        if (cfg.temperature == 0.0) {
            if (draft_tokens[k] != argmax_token(target_probs[k])) {
                return static_cast<int>(k);
            }
        } else {
            const double a = accept_prob(target_probs[k], draft_probs[k], draft_tokens[k]);
            if (rng.uniform() >= a) return static_cast<int>(k);
        }
    }
    return std::nullopt;
}

VerifyOutcome guided_output(std::span<const TokenId> draft_tokens,
                            std::span<const ProbVector> draft_probs,
                            const GuidanceChain& guidance,
                            std::optional<int> first_reject,
                            const SamplerConfig& cfg, Rng& rng) {
    VerifyOutcome out;
    if (!first_reject) {
        out.accepted_len = static_cast<int>(draft_tokens.size());
        out.committed.assign(draft_tokens.begin(), draft_tokens.end());
        out.kind = VerifyKind::AllAccepted;
        // Guidance surplus is a pre-verified bonus, but only when the verified
        // guidance prefix covers the entire draft slice token-for-token.
        if (cfg.temperature == 0.0 && guidance.tokens.size() > draft_tokens.size() &&
            std::equal(draft_tokens.begin(), draft_tokens.end(),
                       guidance.tokens.begin())) {
            out.committed.insert(out.committed.end(),
                                 guidance.tokens.begin() +
                                     static_cast<long>(draft_tokens.size()),
                                 guidance.tokens.end());
            out.kind = VerifyKind::Extension;
        }
        return out;
    }

    const int i = *first_reject;
    out.accepted_len = i;
    out.committed.assign(draft_tokens.begin(), draft_tokens.begin() + i);

    if (cfg.temperature == 0.0) {
        if (i < static_cast<int>(guidance.tokens.size())) {
            // Correction: swap the rejected token for the target's and keep the
            // rest of the guidance chain (the target's own verified path).
            out.committed.insert(out.committed.end(),
                                 guidance.tokens.begin() + i, guidance.tokens.end());
        } else if (i < static_cast<int>(guidance.probs.size())) {
            // Reject past the guidance chain: plain correction from the target's
            // forward distribution at that position.
            out.committed.push_back(argmax_token(guidance.probs[static_cast<size_t>(i)]));
        } else {
            throw std::invalid_argument("guided_output: reject position uncovered");
        }
        out.kind = VerifyKind::Correction;
        return out;
    }

    if (i >= static_cast<int>(guidance.probs.size())) {
        throw std::invalid_argument("guided_output: reject position uncovered");
    }
    out.committed.push_back(residual_sample(guidance.probs[static_cast<size_t>(i)],
                                            draft_probs[static_cast<size_t>(i)], rng));
    out.kind = VerifyKind::ResidualCorrection;
    return out;
}

}  // namespace specpar
