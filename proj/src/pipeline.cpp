#include "specpar/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace specpar {

const char* to_string(Mode m) {
    return m == Mode::PreVerify ? "pre_verify" : "post_verify";
}

void rollback(PipelineState& state, long keep_len) {
    const long ctx_len = static_cast<long>(state.committed.size()) +
                         static_cast<long>(state.speculative.size());
    if (keep_len > ctx_len) {
        throw std::invalid_argument("rollback: keep_len beyond context");
    }
    if (keep_len < state.last_committed_len) {
        throw std::logic_error("rollback: keep_len below committed boundary");
    }
    if (keep_len < static_cast<long>(state.committed.size())) {
        state.committed.resize(static_cast<size_t>(keep_len));
    }
    state.speculative.clear();
    state.spec_probs.clear();
    state.mode = Mode::PreVerify;
}

namespace {

struct TargetWork {
    std::vector<ProbVector> dists;  // |speculative| + |ext candidates| + 1
    RetrievalResult ext;            // target's own continuation after speculative
};

DraftChain do_draft(const PipelineState& state, const TableModel& draft_model,
                    const HierarchicalDatastore& store, const PipelineOptions& opts,
                    Rng rng) {
    TokenSeq ctx = state.committed;
    ctx.insert(ctx.end(), state.speculative.begin(), state.speculative.end());
    return iterative_draft(draft_model, store, ctx, opts.gamma, opts.depth,
                           opts.sampler, rng, nullptr, opts.draft_retrieval);
}

TargetWork do_target(const PipelineState& state, const TableModel& target_model,
                     const HierarchicalDatastore& store, const PipelineOptions& opts,
                     Rng rng) {
    TargetWork tw;
    LookupResult hit;
    if (opts.target_retrieval) {
        TokenSeq ctx = state.committed;
        ctx.insert(ctx.end(), state.speculative.begin(), state.speculative.end());
        hit = store.lookup(ctx, opts.depth);
    }
    // One batched forward covers verification of the speculative tail and the
    // target's retrieved continuation beyond it.
    TokenSeq batch = state.speculative;
    batch.insert(batch.end(), hit.candidates.begin(), hit.candidates.end());
    tw.dists = forward_batch(target_model, state.committed, batch, nullptr);

    const size_t n_spec = state.speculative.size();
    tw.ext = accept_with_model(
        std::span<const ProbVector>(tw.dists).subspan(n_spec), hit.candidates,
        opts.sampler, rng);
    tw.ext.source = hit.source;
    return tw;
}

void record_accepted_run(HierarchicalDatastore& store, const TokenSeq& before,
                         std::span<const TokenId> added) {
    if (added.empty()) return;
    const size_t pre = std::min<size_t>(static_cast<size_t>(store.max_order) - 1,
                                        before.size());
    TokenSeq rec(before.end() - static_cast<long>(pre), before.end());
    rec.insert(rec.end(), added.begin(), added.end());
    store.record_accepted(rec);
}

void record_rejected_run(HierarchicalDatastore& store, const TokenSeq& before,
                         std::span<const TokenId> chain) {
    if (chain.empty()) return;
    const size_t pre = std::min<size_t>(3, before.size());
    TokenSeq rec(before.end() - static_cast<long>(pre), before.end());
    rec.insert(rec.end(), chain.begin(), chain.end());
    store.record_rejected(rec);
}

RoundTrace finish_round(PipelineState& state, HierarchicalDatastore& store,
                        const PipelineOptions& opts, const DraftChain& chain,
                        const TargetWork& tw, Rng rng_v) {
    const int n_spec = static_cast<int>(state.speculative.size());
    const bool greedy = opts.sampler.temperature == 0.0;

    RoundTrace tr;
    tr.round = state.round;
    tr.mode = to_string(state.mode);
    tr.pending = n_spec;
    tr.draft_len = chain.total_len;
    if (opts.draft_retrieval) {
        for (const RetrievalResult& seg : chain.segments) {
            tr.draft_matched.push_back(seg.matched_len);
        }
    }
    tr.target_matched = opts.target_retrieval ? tw.ext.matched_len : -1;
    tr.target_source = to_string(tw.ext.source);

    // Effective target distributions at the speculative positions.
    std::vector<ProbVector> ver(static_cast<size_t>(n_spec));
    for (int k = 0; k < n_spec; ++k) {
        ver[static_cast<size_t>(k)] =
            greedy ? tw.dists[static_cast<size_t>(k)]
                   : tempered(tw.dists[static_cast<size_t>(k)],
                              opts.sampler.temperature);
    }
    const std::optional<int> rej = verify_against_target(
        state.speculative, state.spec_probs, ver, opts.sampler, rng_v);

    const TokenSeq committed_before = state.committed;
    TokenSeq committed_add;
    TokenSeq new_spec;
    std::vector<ProbVector> new_spec_probs;

    if (rej) {
        const int k = *rej;
        tr.accepted_pending = k;
        tr.pending_reject = true;
        tr.rejected = true;
        tr.kind = "pending_reject";
        committed_add.assign(state.speculative.begin(),
                             state.speculative.begin() + k);
        if (greedy) {
            committed_add.push_back(argmax_token(tw.dists[static_cast<size_t>(k)]));
        } else {
            committed_add.push_back(residual_sample(
                ver[static_cast<size_t>(k)],
                state.spec_probs[static_cast<size_t>(k)], rng_v));
        }
        // Discarded chains feed the rejected layer: the dead speculative tail
        // and the fresh draft that was conditioned on it.
        TokenSeq pre = committed_before;
        pre.insert(pre.end(), state.speculative.begin(),
                   state.speculative.begin() + k);
        record_rejected_run(store, pre,
                            std::span<const TokenId>(state.speculative).subspan(
                                static_cast<size_t>(k)));
        TokenSeq draft_pre = committed_before;
        draft_pre.insert(draft_pre.end(), state.speculative.begin(),
                         state.speculative.end());
        record_rejected_run(store, draft_pre, chain.tokens);
    } else {
        tr.accepted_pending = n_spec;
        committed_add = state.speculative;
        committed_add.insert(committed_add.end(), tw.ext.emitted.begin(),
                             tw.ext.emitted.end());
        // The fresh draft stays speculative only where it extends the target's
        // own emission token for token; a divergence discards it.
        const TokenSeq& fresh = chain.tokens;
        const size_t ne = tw.ext.emitted.size();
        const size_t cmp = std::min(fresh.size(), ne);
        size_t j = 0;
        while (j < cmp && fresh[j] == tw.ext.emitted[j]) ++j;
        if (j == ne && fresh.size() > ne) {
            tr.kind = "extend_keep_draft";
            new_spec.assign(fresh.begin() + static_cast<long>(ne), fresh.end());
            new_spec_probs.assign(chain.probs.begin() + static_cast<long>(ne),
                                  chain.probs.end());
        } else if (j == cmp) {
            tr.kind = "extend_draft_subsumed";
        } else {
            tr.kind = "extend_drop_draft";
            tr.rejected = true;
            TokenSeq pre = committed_before;
            pre.insert(pre.end(), state.speculative.begin(), state.speculative.end());
            pre.insert(pre.end(), fresh.begin(), fresh.begin() + static_cast<long>(j));
            record_rejected_run(store, pre,
                                std::span<const TokenId>(fresh).subspan(j));
        }
    }

    tr.committed_count = static_cast<int>(committed_add.size());
    record_accepted_run(store, committed_before, committed_add);

    state.committed.insert(state.committed.end(), committed_add.begin(),
                           committed_add.end());
    rollback(state, static_cast<long>(state.committed.size()));
    state.speculative = std::move(new_spec);
    state.spec_probs = std::move(new_spec_probs);
    state.mode = state.speculative.empty() ? Mode::PreVerify : Mode::PostVerify;
    state.prev_tokens = state.speculative.empty()
                            ? opts.gamma
                            : static_cast<int>(state.speculative.size());
    state.last_committed_len = static_cast<long>(state.committed.size());
    state.round += 1;

    const LatencyConfig& lat = opts.latency;
    const double draft_time =
        opts.gamma * (lat.t_draft + (opts.draft_retrieval ? lat.t_lookup : 0.0));
    const double target_time =
        lat.t_target + (opts.target_retrieval ? lat.t_lookup : 0.0);
    tr.clock_delta = std::max(draft_time, target_time) + lat.t_sync;
    state.clock.charge(tr.clock_delta);
    return tr;
}

void check_state(const PipelineState& state) {
    if (state.mode == Mode::PreVerify && !state.speculative.empty()) {
        throw std::logic_error("pre-verify mode with a speculative tail");
    }
    if (state.mode == Mode::PostVerify &&
        state.prev_tokens != static_cast<int>(state.speculative.size())) {
        throw std::logic_error("prev_tokens out of sync with speculative tail");
    }
    if (state.speculative.size() != state.spec_probs.size()) {
        throw std::logic_error("speculative tokens and probs out of sync");
    }
}

}  // namespace

RoundTrace run_round(PipelineState& state, const TableModel& draft_model,
                     const TableModel& target_model, HierarchicalDatastore& store,
                     const PipelineOptions& opts) {
    check_state(state);
    const std::uint64_t seed = opts.sampler.rng_seed;
    const std::uint64_t round = static_cast<std::uint64_t>(state.round);
    Rng rng_d = derive_rng(seed, round, 0);
    Rng rng_t = derive_rng(seed, round, 1);
    Rng rng_v = derive_rng(seed, round, 2);

    DraftChain chain;
    TargetWork tw;
    if (opts.engine == Engine::Serial) {
        chain = do_draft(state, draft_model, store, opts, rng_d);
        tw = do_target(state, target_model, store, opts, rng_t);
    } else {
        // Two workers over a frozen snapshot; all writes happen below in the
        // orchestrator after the join.
        std::exception_ptr draft_err, target_err;
        std::thread draft_worker([&] {
            try {
                chain = do_draft(state, draft_model, store, opts, rng_d);
            } catch (...) {
                draft_err = std::current_exception();
            }
        });
        std::thread target_worker([&] {
            try {
                tw = do_target(state, target_model, store, opts, rng_t);
            } catch (...) {
                target_err = std::current_exception();
            }
        });
        draft_worker.join();
        target_worker.join();
        if (draft_err) std::rethrow_exception(draft_err);
        if (target_err) std::rethrow_exception(target_err);
    }
    return finish_round(state, store, opts, chain, tw, rng_v);
}

RunResult run(const TableModel& draft_model, const TableModel& target_model,
              HierarchicalDatastore& store, const TokenSeq& prompt,
              int max_new_tokens, const PipelineOptions& opts) {
    if (max_new_tokens < 1) {
        throw std::invalid_argument("max_new_tokens must be >= 1");
    }
    if (prompt.empty()) throw std::invalid_argument("prompt must be nonempty");
    if (opts.gamma < 1) throw std::invalid_argument("gamma must be >= 1");
    if (opts.depth < 1) throw std::invalid_argument("depth must be >= 1");
    opts.latency.validate();

    const long base_lookups = store.stats.lookups.load();
    const long base_hits = store.stats.hits();

    PipelineState state;
    state.committed = prompt;
    state.prev_tokens = opts.gamma;
    state.last_committed_len = static_cast<long>(prompt.size());
    store.record_accepted(prompt);

    const TokenId eos = target_model.vocab_size - 1;
    const size_t prompt_len = prompt.size();
    RunResult res;
    size_t scanned = prompt_len;
    bool done = false;
    while (!done) {
        res.traces.push_back(
            run_round(state, draft_model, target_model, store, opts));
        for (; scanned < state.committed.size(); ++scanned) {
            if (state.committed[scanned] == eos) {
                state.committed.resize(scanned + 1);
                done = true;
                break;
            }
        }
        if (state.committed.size() - prompt_len >=
            static_cast<size_t>(max_new_tokens)) {
            done = true;
        }
        if (state.round > 1000000) {
            throw std::runtime_error("round limit exceeded; pipeline stalled");
        }
    }

    res.output.assign(state.committed.begin() + static_cast<long>(prompt_len),
                      state.committed.end());
    if (res.output.size() > static_cast<size_t>(max_new_tokens)) {
        res.output.resize(static_cast<size_t>(max_new_tokens));
    }

    res.metrics = compute_metrics(res.traces, opts.latency);
    res.metrics.lookups = store.stats.lookups.load() - base_lookups;
    res.metrics.hit_rate =
        res.metrics.lookups == 0
            ? 0.0
            : static_cast<double>(store.stats.hits() - base_hits) /
                  static_cast<double>(res.metrics.lookups);
    store.flush_session();
    return res;
}

RunMetrics compute_metrics(const std::vector<RoundTrace>& traces,
                           const LatencyConfig& latency) {
    if (traces.empty()) throw std::invalid_argument("compute_metrics: no traces");
    RunMetrics m;
    m.rounds = static_cast<long>(traces.size());

    std::vector<long> segments;
    long cur = 0;
    long matched_sum = 0;
    long matched_n = 0;
    for (const RoundTrace& t : traces) {
        m.tokens += t.committed_count;
        m.clock += t.clock_delta;
        if (t.pending_reject) {
            // The correction token is committed after the rejection event and
            // opens the next segment.
            segments.push_back(cur + t.accepted_pending);
            cur = t.committed_count - t.accepted_pending;
        } else if (t.rejected) {
            segments.push_back(cur + t.committed_count);
            cur = 0;
        } else {
            cur += t.committed_count;
        }
        for (int v : t.draft_matched) {
            matched_sum += v;
            ++matched_n;
        }
        if (t.target_matched >= 0) {
            matched_sum += t.target_matched;
            ++matched_n;
        }
    }
    if (cur > 0) segments.push_back(cur);
    if (!segments.empty()) {
        long total = 0;
        for (long s : segments) total += s;
        m.m = static_cast<double>(total) / static_cast<double>(segments.size());
    }
    if (matched_n > 0) {
        m.amt = static_cast<double>(matched_sum) / static_cast<double>(matched_n);
    }
    if (m.clock > 0.0) {
        m.speedup = static_cast<double>(m.tokens) * latency.t_target / m.clock;
    }
    return m;
}

std::string traces_to_jsonl(const std::vector<RoundTrace>& traces) {
    std::string out;
    for (const RoundTrace& t : traces) {
        nlohmann::ordered_json j;
        j["round"] = t.round;
        j["mode"] = t.mode;
        j["pending"] = t.pending;
        j["draft_len"] = t.draft_len;
        j["draft_matched"] = t.draft_matched;
        j["target_matched"] = t.target_matched;
        j["target_source"] = t.target_source;
        j["accepted_pending"] = t.accepted_pending;
        j["pending_reject"] = t.pending_reject;
        j["rejected"] = t.rejected;
        j["committed"] = t.committed_count;
        j["kind"] = t.kind;
        j["clock_delta"] = t.clock_delta;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void write_traces(const std::vector<RoundTrace>& traces, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << traces_to_jsonl(traces);
}

}  // namespace specpar
