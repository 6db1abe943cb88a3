#pragma once

#include <string>

#include "specpar/datastore.hpp"
#include "specpar/model.hpp"
#include "specpar/speculation.hpp"
#include "specpar/types.hpp"
#include "specpar/verification.hpp"

namespace specpar {

// Per-call latencies of the simulated deployment, in abstract time units.
struct LatencyConfig {
    double t_target = 1.0;   // one target forward
    double t_draft = 0.25;   // one draft forward
    double t_lookup = 0.0;   // one datastore lookup
    double t_sync = 0.0;     // one round-boundary synchronization

    double speed_ratio() const {
        if (t_draft <= 0.0) throw std::invalid_argument("t_draft must be > 0");
        return t_target / t_draft;
    }
    void validate() const {
        if (t_target < 0.0 || t_draft <= 0.0 || t_lookup < 0.0 || t_sync < 0.0) {
            throw std::invalid_argument("latency values out of range");
        }
    }
};

enum class Mode { PreVerify, PostVerify };
enum class Engine { Serial, Concurrent };

const char* to_string(Mode m);

struct PipelineOptions {
    int gamma = 4;
    int depth = 10;
    bool draft_retrieval = true;
    bool target_retrieval = true;
    Engine engine = Engine::Serial;
    SamplerConfig sampler;
    LatencyConfig latency;
};

struct PipelineState {
    TokenSeq committed;                   // authoritative output prefix
    TokenSeq speculative;                 // drafted, not yet target-verified
    std::vector<ProbVector> spec_probs;   // draft effective dist per speculative token
    Mode mode = Mode::PreVerify;
    int prev_tokens = 0;                  // |speculative| in PostVerify, gamma otherwise
    long round = 0;
    SimClock clock;
    long last_committed_len = 0;          // committed length at the previous boundary
};

struct RoundTrace {
    long round = 0;
    std::string mode;                // mode entered
    int pending = 0;                 // speculative tokens carried into the round
    int draft_len = 0;               // fresh draft chain length
    std::vector<int> draft_matched;  // per-segment matched lengths (retrieval on)
    int target_matched = -1;         // extension matched length, -1 if retrieval off
    std::string target_source;       // datastore layer that served the target lookup
    int accepted_pending = 0;        // pending tokens that survived verification
    bool pending_reject = false;     // a speculative token was rejected
    bool rejected = false;           // any rejection event this round
    int committed_count = 0;
    std::string kind;
    double clock_delta = 0.0;
};

struct RunMetrics {
    long tokens = 0;      // committed across all rounds (pre-truncation)
    long rounds = 0;
    double clock = 0.0;
    double m = 0.0;       // mean tokens committed between rejection events
    double amt = 0.0;     // mean matched length over enabled retrieval forwards
    double speedup = 0.0; // tokens * t_target / clock
    double hit_rate = 0.0;
    long lookups = 0;
};

struct RunResult {
    TokenSeq output;   // committed tokens after the prompt, truncated
    RunMetrics metrics;
    std::vector<RoundTrace> traces;
};

/// Truncates the working context to keep_len and clears the speculative tail.
/// keep_len below the previous round's committed length is an invariant
/// failure; the call is idempotent at a fixed keep_len.
void rollback(PipelineState& state, long keep_len);

/// One parallel round: the draft worker extends committed + speculative by a
/// fresh gamma-segment chain while the target worker scores the speculative
/// tokens and its own retrieved continuation in a single batched forward.
/// The orchestrator then verifies, commits, and re-arms the speculative tail.
RoundTrace run_round(PipelineState& state, const TableModel& draft_model,
                     const TableModel& target_model, HierarchicalDatastore& store,
                     const PipelineOptions& opts);

/// Full generation loop: rounds until max_new_tokens are committed or the end
/// token (vocab_size - 1) lands in the output. Session datastore layers are
/// flushed before returning.
RunResult run(const TableModel& draft_model, const TableModel& target_model,
              HierarchicalDatastore& store, const TokenSeq& prompt,
              int max_new_tokens, const PipelineOptions& opts);

RunMetrics compute_metrics(const std::vector<RoundTrace>& traces,
                           const LatencyConfig& latency);

/// JSON-lines encoding, one round per line, deterministic field order.
std::string traces_to_jsonl(const std::vector<RoundTrace>& traces);
void write_traces(const std::vector<RoundTrace>& traces, const std::string& path);

}  // namespace specpar
