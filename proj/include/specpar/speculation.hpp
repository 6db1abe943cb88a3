#pragma once

#include "specpar/datastore.hpp"
#include "specpar/model.hpp"
#include "specpar/types.hpp"

namespace specpar {

// One Retrieval Forward: matched_len retrieved tokens accepted by the model
// plus the model's own continuation, with the model's effective (tempered)
// distribution at every emitted position.
struct RetrievalResult {
    TokenSeq emitted;  // matched prefix + correction, length matched_len + 1
    int matched_len = 0;
    std::vector<ProbVector> probs;
    LookupSource source = LookupSource::Miss;
};

struct DraftChain {
    std::vector<RetrievalResult> segments;
    TokenSeq tokens;                 // flattened emissions in order
    std::vector<ProbVector> probs;   // per-position effective distributions
    int total_len = 0;
};

/// Core acceptance step shared by the draft and target sides: given the
/// model's distributions at each candidate position (|dists| == |cands| + 1),
/// keep the accepted candidate prefix and emit one continuation token.
/// Greedy accepts a candidate iff it is the position argmax; stochastic flips
/// one coin per candidate against its effective probability and corrects a
/// rejected candidate with a draw from the remaining mass, so every emitted
/// token keeps the model's own per-position law. `probs` holds the effective
/// (tempered) distribution at every emitted position.
RetrievalResult accept_with_model(std::span<const ProbVector> dists,
                                  std::span<const TokenId> cands,
                                  const SamplerConfig& cfg, Rng& rng);

/// One retrieval-accelerated model step: look the context suffix up in the
/// datastore, score the candidates in a single forward pass, keep the accepted
/// prefix and emit one model continuation. A datastore miss degenerates to a
/// plain autoregressive step. `use_retrieval = false` skips the lookup
/// entirely (pure AR drafting).
RetrievalResult retrieval_forward(const TableModel& model,
                                  const HierarchicalDatastore& store,
                                  std::span<const TokenId> context, int depth,
                                  const SamplerConfig& cfg, Rng& rng,
                                  SimClock* clock = nullptr,
                                  bool use_retrieval = true);

/// gamma chained retrieval forwards, each appending its emission to the
/// working context: gamma forward costs for up to gamma * (1 + depth) tokens.
DraftChain iterative_draft(const TableModel& model,
                           const HierarchicalDatastore& store,
                           std::span<const TokenId> context, int gamma, int depth,
                           const SamplerConfig& cfg, Rng& rng,
                           SimClock* clock = nullptr, bool use_retrieval = true);

/// Mean matched length over a trace of retrieval forwards.
double measure_amt(std::span<const RetrievalResult> traces);

}  // namespace specpar
