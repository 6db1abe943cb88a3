#pragma once

#include <atomic>
#include <map>
#include <string>

#include "specpar/types.hpp"

namespace specpar {

struct Occurrence {
    int seq_id = 0;
    int end_pos = 0;  // index of the n-gram's last token inside its sequence
    long step = 0;    // insertion step, used for recency tie-breaks
};

// Append-only occurrence-pointer index: every n-gram (1 <= n <= max_order) of
// every stored sequence maps to the positions where it ends.
struct NGramIndex {
    int max_order = 3;
    std::vector<TokenSeq> sequences;
    std::map<TokenSeq, std::vector<Occurrence>> index;

    void insert(std::span<const TokenId> tokens, long step);
    size_t occurrence_count() const;
    void clear();
};

enum class LookupSource { Prior, Dynamic, Rejected, ContextFallback, Miss };

const char* to_string(LookupSource s);

struct LookupResult {
    TokenSeq candidates;
    LookupSource source = LookupSource::Miss;
    int matched_order = 0;
};

struct LookupStats {
    LookupStats() = default;
    LookupStats(const LookupStats& o) { *this = o; }
    LookupStats& operator=(const LookupStats& o) {
        lookups = o.lookups.load();
        prior_hits = o.prior_hits.load();
        dynamic_hits = o.dynamic_hits.load();
        rejected_hits = o.rejected_hits.load();
        fallback_hits = o.fallback_hits.load();
        misses = o.misses.load();
        return *this;
    }

    std::atomic<long> lookups{0};
    std::atomic<long> prior_hits{0};
    std::atomic<long> dynamic_hits{0};
    std::atomic<long> rejected_hits{0};
    std::atomic<long> fallback_hits{0};
    std::atomic<long> misses{0};

    long hits() const {
        return prior_hits.load() + dynamic_hits.load() + rejected_hits.load() +
               fallback_hits.load();
    }
    double hit_rate() const {
        const long n = lookups.load();
        return n == 0 ? 0.0 : static_cast<double>(hits()) / static_cast<double>(n);
    }
};

// Three-layer n-gram store with priority search (prior > dynamic > rejected at
// each order, higher order first) and a PLD-style in-context fallback. One
// store is shared by the draft and target workers: lookups may run
// concurrently, mutations only happen at round boundaries.
struct HierarchicalDatastore {
    NGramIndex prior;
    NGramIndex dynamic;
    NGramIndex rejected;
    int max_order = 3;
    int depth = 10;
    long step_counter = 0;
    bool rejected_enabled = true;
    mutable LookupStats stats;

    explicit HierarchicalDatastore(int n = 3, int d = 10)
        : max_order(n), depth(d) {
        prior.max_order = dynamic.max_order = rejected.max_order = n;
    }

    LookupResult lookup(std::span<const TokenId> context, int d) const;
    void record_accepted(std::span<const TokenId> tokens);
    void record_rejected(std::span<const TokenId> tokens);
    /// Empties the session-scoped layers (dynamic, rejected); prior untouched.
    void flush_session();
};

NGramIndex build_prior(const std::vector<TokenSeq>& corpora, int max_order, int rounds);

// dstore-v1 sequence listing; loading re-inserts in order, so the rebuilt
// index is deterministic.
std::string serialize_index(const NGramIndex& index);
NGramIndex parse_index(const std::string& text);
void save_index(const NGramIndex& index, const std::string& path);
NGramIndex load_index(const std::string& path);

}  // namespace specpar
