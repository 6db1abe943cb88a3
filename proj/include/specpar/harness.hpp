#pragma once

#include <string>

#include "specpar/pipeline.hpp"

namespace specpar {

enum class Method {
    VanillaAR,      // plain target-only decoding, the speedup = 1 reference
    StandardSD,     // serial draft-then-verify, no retrieval
    PSD,            // pipelined draft-when-verify, no retrieval
    TargetRetrieval,// pipelined, retrieval on the target side only
    DraftRetrieval, // serial draft-then-verify with a retrieval-boosted drafter
    Double          // pipelined with retrieval on both sides
};

const char* to_string(Method m);
Method parse_method(const std::string& name);

struct ExperimentConfig {
    int vocab = 32;
    double rho = 0.5;        // corpus repetitiveness knob
    int corpus_len = 4096;
    int draft_order = 1;
    int target_order = 2;
    double smoothing = 0.1;
    LatencyConfig latency;
    int gamma = 0;           // 0 means ceil(speed ratio)
    int depth = 10;          // retrieval depth d
    int ngram = 3;           // datastore order N
    int prior_rounds = 10;   // sequences preloaded into the prior layer (K)
    double temperature = 0.0;
    std::uint64_t seed = 1;
    Method method = Method::Double;
    int max_new_tokens = 256;
    int prompt_len = 8;
    bool rejected_cache = true;
    Engine engine = Engine::Serial;

    int effective_gamma() const;
    void validate() const;
};

// Flat key=value text, one pair per line, '#' comments.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Synthetic corpus: a token stream mixing fresh random spans with replays of
/// earlier spans at rate rho, split into sequences. rho = 1 degenerates to a
/// single tiled motif; tokens stay clear of the reserved BOS/EOS ids.
std::vector<TokenSeq> gen_corpus(int vocab, double rho, int length,
                                 std::uint64_t seed);

struct ReportRow {
    std::string label;
    double m = 0.0;
    double amt = 0.0;
    double speedup = 0.0;
    double hit_rate = 0.0;
    long tokens = 0;
    double clock = 0.0;
};

struct Report {
    std::vector<ReportRow> rows;
    std::string config_echo;
    std::uint64_t seed = 0;
};

// Everything a method run needs, derived deterministically from the config.
struct ExperimentSetup {
    std::vector<TokenSeq> corpus;
    TableModel draft_model;
    TableModel target_model;
    TokenSeq prompt;
};

ExperimentSetup build_setup(const ExperimentConfig& cfg);
HierarchicalDatastore build_store(const ExperimentConfig& cfg,
                                  const std::vector<TokenSeq>& corpus);

/// Runs one decoding strategy under the shared latency model and lossless
/// verification rules. All methods commit identical outputs under greedy
/// decoding; they differ only in simulated time.
ReportRow run_method(const ExperimentConfig& cfg);
ReportRow run_method_on(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                        Method method, RunResult* result_out = nullptr);

/// Full pipeline runs with individual components disabled, one row each.
Report ablate(const ExperimentConfig& cfg);

/// Full pipeline runs across retrieval depths, one row per depth.
Report sweep_depth(const ExperimentConfig& cfg, const std::vector<int>& depths);

/// CSV ("csv") or aligned text table ("text"); deterministic column order.
std::string emit_report(const std::vector<ReportRow>& rows,
                        const std::string& format);
void write_report(const Report& report, const std::string& path,
                  const std::string& format);

}  // namespace specpar
