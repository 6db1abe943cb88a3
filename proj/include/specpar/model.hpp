#pragma once

#include <map>
#include <string>

#include "specpar/rng.hpp"
#include "specpar/types.hpp"

namespace specpar {

struct SamplerConfig {
    double temperature = 0.0;  // 0 -> argmax, >0 -> tempered sampling
    std::uint64_t rng_seed = 0;
};

// Deterministic order-m conditional token table standing in for an LLM.
// Immutable after construction; safe to share across workers.
struct TableModel {
    int order = 1;
    int vocab_size = 0;
    double smoothing = 0.0;
    double forward_cost = 1.0;  // simulated time units per forward pass
    std::map<TokenSeq, ProbVector> table;
    ProbVector fallback;
};

/// Conditional distribution over the next token given the last `order` tokens
/// of `context` (left-padded with BOS when shorter). Charges forward_cost once.
ProbVector forward(const TableModel& model, std::span<const TokenId> context,
                   SimClock* clock = nullptr);

/// Distributions at context, context+candidates[0..1], ... in one forward pass:
/// |candidates|+1 vectors, bitwise identical to sequential forward calls, but
/// forward_cost is charged exactly once.
std::vector<ProbVector> forward_batch(const TableModel& model,
                                      std::span<const TokenId> context,
                                      std::span<const TokenId> candidates,
                                      SimClock* clock = nullptr);

/// p^(1/T) renormalized; T=1 returns dist unchanged (exactly).
ProbVector tempered(const ProbVector& dist, double temperature);

TokenId argmax_token(const ProbVector& dist);

/// T=0: argmax with ties broken toward the lowest id. T>0: one inverse-CDF
/// draw from the tempered distribution. Consumes exactly one uniform in the
/// stochastic case.
TokenId sample(const ProbVector& dist, const SamplerConfig& cfg, Rng& rng);

TableModel build_model_from_corpus(const std::vector<TokenSeq>& corpus, int order,
                                   double smoothing, int vocab_size);

// model-v1 text format, probabilities at 17 significant digits (round-trip exact).
void save_model(const TableModel& model, const std::string& path);
TableModel load_model(const std::string& path);
std::string serialize_model(const TableModel& model);
TableModel parse_model(const std::string& text);

}  // namespace specpar
