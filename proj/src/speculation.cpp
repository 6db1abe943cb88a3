#include "specpar/speculation.hpp"

#include "specpar/verification.hpp"

namespace specpar {

RetrievalResult accept_with_model(std::span<const ProbVector> dists,
                                  std::span<const TokenId> cands,
                                  const SamplerConfig& cfg, Rng& rng) {
    if (dists.size() != cands.size() + 1) {
        throw std::invalid_argument("accept_with_model: need |cands|+1 distributions");
    }
    RetrievalResult out;
    const bool greedy = cfg.temperature == 0.0;
    int s = 0;
    while (s < static_cast<int>(cands.size())) {
        const ProbVector& dist = dists[static_cast<size_t>(s)];
        const TokenId cand = cands[static_cast<size_t>(s)];
        if (cand < 0 || cand >= static_cast<TokenId>(dist.size())) break;
        if (greedy) {
            if (cand != argmax_token(dist)) break;
            out.probs.push_back(dist);
        } else {
            const ProbVector eff = tempered(dist, cfg.temperature);
            const bool accepted = rng.uniform() < eff[static_cast<size_t>(cand)];
            out.probs.push_back(eff);
            if (!accepted) break;
        }
        out.emitted.push_back(cand);
        ++s;
    }
    out.matched_len = s;

    // Continuation: on a rejected candidate the correction comes from the
    // residual of the point-mass proposal so the emitted stream keeps the
    // model's own per-position law; otherwise a plain model sample.
    if (s < static_cast<int>(cands.size())) {
        if (greedy) {
            const ProbVector& dist = dists[static_cast<size_t>(s)];
            out.probs.push_back(dist);
            out.emitted.push_back(argmax_token(dist));
        } else {
            out.emitted.push_back(residual_sample_point_mass(
                out.probs.back(), cands[static_cast<size_t>(s)], rng));
        }
    } else {
        const ProbVector& dist = dists[static_cast<size_t>(s)];
        out.probs.push_back(greedy ? dist : tempered(dist, cfg.temperature));
        out.emitted.push_back(sample(dist, cfg, rng));
    }
    return out;
}

RetrievalResult retrieval_forward(const TableModel& model,
                                  const HierarchicalDatastore& store,
                                  std::span<const TokenId> context, int depth,
                                  const SamplerConfig& cfg, Rng& rng,
                                  SimClock* clock, bool use_retrieval) {
    LookupResult hit;
    if (use_retrieval) hit = store.lookup(context, depth);
    const std::vector<ProbVector> dists =
        forward_batch(model, context, hit.candidates, clock);
    RetrievalResult out = accept_with_model(dists, hit.candidates, cfg, rng);
    out.source = hit.source;
    return out;
}

DraftChain iterative_draft(const TableModel& model,
                           const HierarchicalDatastore& store,
                           std::span<const TokenId> context, int gamma, int depth,
                           const SamplerConfig& cfg, Rng& rng, SimClock* clock,
                           bool use_retrieval) {
    if (gamma < 1) throw std::invalid_argument("iterative_draft: gamma must be >= 1");
    DraftChain chain;
    TokenSeq ctx(context.begin(), context.end());
    for (int j = 0; j < gamma; ++j) {
        RetrievalResult seg =
            retrieval_forward(model, store, ctx, depth, cfg, rng, clock, use_retrieval);
        ctx.insert(ctx.end(), seg.emitted.begin(), seg.emitted.end());
        chain.tokens.insert(chain.tokens.end(), seg.emitted.begin(), seg.emitted.end());
        chain.probs.insert(chain.probs.end(), seg.probs.begin(), seg.probs.end());
        chain.total_len += static_cast<int>(seg.emitted.size());
        chain.segments.push_back(std::move(seg));
    }
    return chain;
}

double measure_amt(std::span<const RetrievalResult> traces) {
    if (traces.empty()) throw std::invalid_argument("measure_amt: empty trace");
    double sum = 0.0;
    for (const RetrievalResult& r : traces) sum += r.matched_len;
    return sum / static_cast<double>(traces.size());
}

}  // namespace specpar
