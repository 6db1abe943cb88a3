#include "specpar/analytics.hpp"

#include <cmath>
#include <stdexcept>

namespace specpar {

namespace {

constexpr double kOneTol = 1e-12;

void check_alpha_gamma(double alpha, int gamma) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha out of [0,1]");
    if (gamma < 1) throw std::invalid_argument("gamma must be >= 1");
}

}  // namespace

double expected_single_round(double alpha, int gamma) {
    check_alpha_gamma(alpha, gamma);
    if (std::fabs(1.0 - alpha) < kOneTol) return static_cast<double>(gamma) + 1.0;
    return (1.0 - std::pow(alpha, gamma + 1)) / (1.0 - alpha);
}

double expected_rounds(double alpha, int gamma) {
    check_alpha_gamma(alpha, gamma);
    if (std::fabs(1.0 - alpha) < kOneTol) {
        throw std::domain_error("alpha = 1: no rejection ever occurs");
    }
    return 1.0 / (1.0 - std::pow(alpha, gamma));
}

double expected_multi_round(double alpha, int gamma) {
    const double k = expected_rounds(alpha, gamma);
    return (k - 1.0) * (gamma + 1.0) + expected_single_round(alpha, gamma);
}

double speedup_sd(double alpha, int gamma, double c) {
    if (c <= 0.0) throw std::invalid_argument("c must be > 0");
    const double k = expected_rounds(alpha, gamma);
    return expected_multi_round(alpha, gamma) * c / (k * (gamma + c));
}

double speedup_psd(double alpha, int gamma, double c) {
    if (c <= 0.0) throw std::invalid_argument("c must be > 0");
    const double k = expected_rounds(alpha, gamma);
    return (expected_multi_round(alpha, gamma) - k + 1.0) * c / (k * gamma + c);
}

double speedup_double(const TheoryParams& params, double k, int gamma) {
    if (params.c <= 0.0) throw std::invalid_argument("c must be > 0");
    if (params.amt < 0.0) throw std::invalid_argument("amt must be >= 0");
    if (k < 1.0) throw std::invalid_argument("k must be >= 1");
    const double c_eff = params.c * (1.0 + params.amt);
    return (params.e_ld + params.e_bonus) * c_eff / (k * gamma + c_eff);
}

namespace {

// One draft-verify round: accepted prefix length of gamma Bernoulli(alpha)
// trials, plus the correction or bonus token.
long single_round_tokens(double alpha, int gamma, Rng& rng) {
    long acc = 0;
    for (int i = 0; i < gamma; ++i) {
        if (rng.uniform() < alpha) {
            ++acc;
        } else {
            break;
        }
    }
    return acc + 1;
}

// Rounds until the first rejection, inclusive: geometric with p = 1 - alpha^gamma.
long episode_rounds(double alpha, int gamma, Rng& rng) {
    long k = 1;
    while (true) {
        bool all = true;
        for (int i = 0; i < gamma; ++i) {
            if (rng.uniform() >= alpha) {
                all = false;
                break;
            }
        }
        if (!all) return k;
        ++k;
    }
}

}  // namespace

McEstimates mc_oracle(double alpha, int gamma, long trials, std::uint64_t seed) {
    check_alpha_gamma(alpha, gamma);
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (std::fabs(1.0 - alpha) < kOneTol) {
        throw std::domain_error("alpha = 1: no rejection ever occurs");
    }
    Rng rng(seed);
    double s_single = 0.0, s_rounds = 0.0, s_multi = 0.0;
    for (long t = 0; t < trials; ++t) {
        s_single += static_cast<double>(single_round_tokens(alpha, gamma, rng));
        const long k = episode_rounds(alpha, gamma, rng);
        s_rounds += static_cast<double>(k);
        // Episode model: k-1 fully accepted rounds of gamma+1 tokens each,
        // closed by an independent single-round draw.
        s_multi += static_cast<double>((k - 1) * (gamma + 1) +
                                       single_round_tokens(alpha, gamma, rng));
    }
    const double n = static_cast<double>(trials);
    return {s_single / n, s_rounds / n, s_multi / n};
}

double sim_sd(double alpha, int gamma, double c, long episodes, std::uint64_t seed) {
    check_alpha_gamma(alpha, gamma);
    if (c <= 0.0) throw std::invalid_argument("c must be > 0");
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    Rng rng(seed);
    double tokens = 0.0, time = 0.0;  // time in draft-forward units
    for (long e = 0; e < episodes; ++e) {
        const long k = episode_rounds(alpha, gamma, rng);
        tokens += static_cast<double>((k - 1) * (gamma + 1) +
                                      single_round_tokens(alpha, gamma, rng));
        time += static_cast<double>(k) * (gamma + c);
    }
    return tokens * c / time;
}

double sim_psd(double alpha, int gamma, double c, long episodes, std::uint64_t seed) {
    check_alpha_gamma(alpha, gamma);
    if (c <= 0.0) throw std::invalid_argument("c must be > 0");
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    Rng rng(seed);
    double tokens = 0.0, time = 0.0;
    for (long e = 0; e < episodes; ++e) {
        const long k = episode_rounds(alpha, gamma, rng);
        // Pipelining overlaps the correction of every fully accepted round
        // with the next round's draft, so those rounds net gamma tokens each.
        tokens += static_cast<double>((k - 1) * gamma +
                                      single_round_tokens(alpha, gamma, rng));
        time += static_cast<double>(k) * gamma + c;
    }
    return tokens * c / time;
}

}  // namespace specpar
