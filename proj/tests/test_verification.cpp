#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "specpar/verification.hpp"

using namespace specpar;

namespace {

ProbVector random_dist(Rng& rng, int n) {
    ProbVector p(static_cast<size_t>(n));
    double sum = 0.0;
    for (double& v : p) {
        v = 0.05 + rng.uniform();
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

double tv_distance(const ProbVector& a, const ProbVector& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d += std::fabs(a[i] - b[i]);
    return d / 2.0;
}

// law of the committed token for one accept-or-residual step, by enumeration
ProbVector committed_law(const ProbVector& p, const ProbVector& q) {
    ProbVector law(p.size(), 0.0);
    ProbVector res(p.size(), 0.0);
    double res_total = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        res[i] = std::max(0.0, p[i] - q[i]);
        res_total += res[i];
    }
    for (size_t x = 0; x < p.size(); ++x) {
        const double acc = q[x] * std::min(1.0, p[x] / q[x]);
        law[x] += acc;  // draft emitted x and it was accepted
    }
    double reject_mass = 1.0 - 0.0;
    reject_mass = 0.0;
    for (size_t x = 0; x < p.size(); ++x) {
        reject_mass += q[x] * (1.0 - std::min(1.0, p[x] / q[x]));
    }
    if (res_total > 0.0) {
        for (size_t t = 0; t < p.size(); ++t) {
            law[t] += reject_mass * res[t] / res_total;
        }
    }
    return law;
}

}  // namespace

TEST_CASE("accept_prob is min(1, p/q) and rejects zero draft mass") {
    const ProbVector p = {0.5, 0.5, 0.0};
    const ProbVector q = {0.25, 0.75, 0.0};
    CHECK(accept_prob(p, q, 0) == doctest::Approx(1.0));
    CHECK(accept_prob(p, q, 1) == doctest::Approx(0.5 / 0.75));
    CHECK_THROWS_AS(accept_prob(p, q, 2), std::invalid_argument);
}

TEST_CASE("residual_sample draws from norm(max(0, p - q))") {
    const ProbVector p = {0.6, 0.3, 0.1};
    const ProbVector q = {0.2, 0.5, 0.3};
    // residual: {0.4, 0, 0} -> always token 0
    Rng rng(3);
    for (int i = 0; i < 20; ++i) CHECK(residual_sample(p, q, rng) == 0);
}

TEST_CASE("residual_sample empirical frequencies match the analytic residual") {
    const ProbVector p = {0.5, 0.3, 0.15, 0.05};
    const ProbVector q = {0.1, 0.4, 0.05, 0.45};
    // residual weights {0.4, 0, 0.1, 0} -> {0.8, 0, 0.2, 0}
    Rng rng(9);
    const int trials = 100000;
    std::vector<long> hits(4, 0);
    for (int i = 0; i < trials; ++i) hits[static_cast<size_t>(residual_sample(p, q, rng))]++;
    CHECK(static_cast<double>(hits[0]) / trials == doctest::Approx(0.8).epsilon(0.02));
    CHECK(hits[1] == 0);
    CHECK(static_cast<double>(hits[2]) / trials == doctest::Approx(0.2).epsilon(0.05));
    CHECK(hits[3] == 0);
}

TEST_CASE("residual_sample throws when p <= q everywhere") {
    const ProbVector p = {0.5, 0.5};
    Rng rng(1);
    CHECK_THROWS_AS(residual_sample(p, p, rng), std::runtime_error);
}

TEST_CASE("residual_sample_point_mass removes the candidate and renormalizes") {
    const ProbVector p = {0.5, 0.25, 0.25};
    Rng rng(4);
    const int trials = 60000;
    std::vector<long> hits(3, 0);
    for (int i = 0; i < trials; ++i) {
        hits[static_cast<size_t>(residual_sample_point_mass(p, 0, rng))]++;
    }
    CHECK(hits[0] == 0);
    CHECK(static_cast<double>(hits[1]) / trials == doctest::Approx(0.5).epsilon(0.03));
    CHECK(static_cast<double>(hits[2]) / trials == doctest::Approx(0.5).epsilon(0.03));
    const ProbVector dirac = {0.0, 1.0, 0.0};
    CHECK_THROWS_AS(residual_sample_point_mass(dirac, 1, rng), std::runtime_error);
}

TEST_CASE("greedy verify rejects at the first non-argmax position") {
    const SamplerConfig cfg{0.0, 0};
    Rng rng(1);
    const TokenSeq draft = {1, 0, 2};
    const std::vector<ProbVector> qp(3, ProbVector{0.2, 0.6, 0.2});
    const std::vector<ProbVector> tp = {
        {0.2, 0.6, 0.2},  // argmax 1, accept
        {0.1, 0.8, 0.1},  // argmax 1, draft said 0 -> reject at 1
        {0.0, 0.0, 1.0},
    };
    CHECK(verify_against_target(draft, qp, tp, cfg, rng) == 1);
    const TokenSeq ok = {1, 1, 2};
    CHECK(!verify_against_target(ok, qp, tp, cfg, rng).has_value());
}

TEST_CASE("verify throws when the target slice is short") {
    const SamplerConfig cfg{0.0, 0};
    Rng rng(1);
    const TokenSeq draft = {1, 1};
    const std::vector<ProbVector> qp(2, ProbVector{0.5, 0.5});
    const std::vector<ProbVector> tp(1, ProbVector{0.5, 0.5});
    CHECK_THROWS_AS(verify_against_target(draft, qp, tp, cfg, rng),
                    std::invalid_argument);
}

TEST_CASE("stochastic verify accepts at rate min(1, p/q)") {
    const SamplerConfig cfg{1.0, 0};
    const TokenSeq draft = {0};
    const std::vector<ProbVector> qp(1, ProbVector{0.8, 0.2});
    const std::vector<ProbVector> tp(1, ProbVector{0.4, 0.6});
    Rng rng(21);
    const int trials = 100000;
    int accepted = 0;
    for (int i = 0; i < trials; ++i) {
        if (!verify_against_target(draft, qp, tp, cfg, rng)) ++accepted;
    }
    CHECK(static_cast<double>(accepted) / trials == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("single-step accept-or-residual law equals the target distribution") {
    // the committed token of a rejected position is a residual draw; combined
    // with acceptance the law must be exactly p
    Rng seed_rng(1234);
    for (int pair = 0; pair < 25; ++pair) {
        const ProbVector p = random_dist(seed_rng, 6);
        const ProbVector q = random_dist(seed_rng, 6);
        CHECK(tv_distance(committed_law(p, q), p) < 1e-12);

        // simulate: draft samples from q, accept with min(1,p/q), else residual
        const SamplerConfig cfg{1.0, 0};
        Rng rng(500 + static_cast<std::uint64_t>(pair));
        const int trials = 20000;
        ProbVector emp(6, 0.0);
        for (int t = 0; t < trials; ++t) {
            const TokenId x = sample(q, cfg, rng);
            TokenId committed;
            if (rng.uniform() < accept_prob(p, q, x)) {
                committed = x;
            } else {
                committed = residual_sample(p, q, rng);
            }
            emp[static_cast<size_t>(committed)] += 1.0 / trials;
        }
        CHECK(tv_distance(emp, p) < 0.03);
    }
}

TEST_CASE("guided_output: all accepted commits the draft slice") {
    const SamplerConfig cfg{0.0, 0};
    Rng rng(1);
    const TokenSeq draft = {3, 4};
    const std::vector<ProbVector> qp;
    GuidanceChain g;
    g.tokens = {3, 4};
    const VerifyOutcome out = guided_output(draft, qp, g, std::nullopt, cfg, rng);
    CHECK(out.kind == VerifyKind::AllAccepted);
    CHECK(out.committed == TokenSeq{3, 4});
    CHECK(out.accepted_len == 2);
}

TEST_CASE("guided_output: greedy extension needs a covering guidance prefix") {
    const SamplerConfig cfg{0.0, 0};
    Rng rng(1);
    const TokenSeq draft = {3, 4};
    GuidanceChain longer;
    longer.tokens = {3, 4, 7, 8};
    VerifyOutcome out = guided_output(draft, {}, longer, std::nullopt, cfg, rng);
    CHECK(out.kind == VerifyKind::Extension);
    CHECK(out.committed == TokenSeq{3, 4, 7, 8});

    GuidanceChain diverging;
    diverging.tokens = {3, 9, 7, 8};
    out = guided_output(draft, {}, diverging, std::nullopt, cfg, rng);
    CHECK(out.kind == VerifyKind::AllAccepted);
    CHECK(out.committed == TokenSeq{3, 4});
}

TEST_CASE("guided_output: greedy rejection keeps the guidance tail") {
    const SamplerConfig cfg{0.0, 0};
    Rng rng(1);
    const TokenSeq draft = {3, 4, 5};
    GuidanceChain g;
    g.tokens = {3, 6, 7};
    const VerifyOutcome out = guided_output(draft, {}, g, 1, cfg, rng);
    CHECK(out.kind == VerifyKind::Correction);
    CHECK(out.accepted_len == 1);
    CHECK(out.committed == TokenSeq{3, 6, 7});
}

TEST_CASE("guided_output: greedy rejection past the chain falls back to argmax") {
    const SamplerConfig cfg{0.0, 0};
    Rng rng(1);
    const TokenSeq draft = {3, 4};
    GuidanceChain g;
    g.tokens = {3};
    g.probs = {{0.9, 0.1}, {0.1, 0.9}};
    const VerifyOutcome out = guided_output(draft, {}, g, 1, cfg, rng);
    CHECK(out.kind == VerifyKind::Correction);
    CHECK(out.committed == TokenSeq{3, 1});

    CHECK_THROWS_AS(guided_output(draft, {}, GuidanceChain{}, 1, cfg, rng),
                    std::invalid_argument);
}

TEST_CASE("guided_output: stochastic rejection draws a residual and drops the tail") {
    const SamplerConfig cfg{1.0, 0};
    Rng rng(8);
    const TokenSeq draft = {0, 1};
    const std::vector<ProbVector> qp = {{0.9, 0.1}, {0.2, 0.5, 0.3}};
    GuidanceChain g;
    g.tokens = {0, 2, 4};
    g.probs = {{0.9, 0.1}, {0.6, 0.1, 0.3}};
    const VerifyOutcome out = guided_output(draft, qp, g, 1, cfg, rng);
    CHECK(out.kind == VerifyKind::ResidualCorrection);
    CHECK(out.accepted_len == 1);
    REQUIRE(out.committed.size() == 2);
    CHECK(out.committed[0] == 0);
    // residual of ({0.6,0.1,0.3} - {0.2,0.5,0.3}) has mass only on token 0
    CHECK(out.committed[1] == 0);
}
