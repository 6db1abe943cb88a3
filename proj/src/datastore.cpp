#include "specpar/datastore.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace specpar {

void NGramIndex::insert(std::span<const TokenId> tokens, long step) {
    if (tokens.empty()) throw std::invalid_argument("insert: empty token sequence");
    const int seq_id = static_cast<int>(sequences.size());
    sequences.emplace_back(tokens.begin(), tokens.end());
    const int len = static_cast<int>(tokens.size());
    for (int n = 1; n <= max_order; ++n) {
        for (int end = n - 1; end < len; ++end) {
            TokenSeq key(tokens.begin() + (end - n + 1), tokens.begin() + end + 1);
            index[std::move(key)].push_back({seq_id, end, step});
        }
    }
}

size_t NGramIndex::occurrence_count() const {
    size_t total = 0;
    for (const auto& [_, occs] : index) total += occs.size();
    return total;
}

void NGramIndex::clear() {
    sequences.clear();
    index.clear();
}

const char* to_string(LookupSource s) {
    switch (s) {
        case LookupSource::Prior: return "prior";
        case LookupSource::Dynamic: return "dynamic";
        case LookupSource::Rejected: return "rejected";
        case LookupSource::ContextFallback: return "context";
        case LookupSource::Miss: return "miss";
    }
    return "?";
}

namespace {

// Most recent insertion wins; among equals, the occurrence that can supply the
// most of the requested depth. Occurrences at the very end of their sequence
// have nothing to retrieve and are skipped.
const Occurrence* best_occurrence(const NGramIndex& idx, const TokenSeq& key, int d) {
    auto it = idx.index.find(key);
    if (it == idx.index.end()) return nullptr;
    const Occurrence* best = nullptr;
    int best_avail = 0;
    for (const Occurrence& occ : it->second) {
        const int remaining =
            static_cast<int>(idx.sequences[static_cast<size_t>(occ.seq_id)].size()) -
            occ.end_pos - 1;
        const int avail = std::min(remaining, d);
        if (avail <= 0) continue;
        if (!best || occ.step > best->step ||
            (occ.step == best->step &&
             (avail > best_avail ||
              (avail == best_avail &&
               (occ.seq_id > best->seq_id ||
                (occ.seq_id == best->seq_id && occ.end_pos > best->end_pos)))))) {
            best = &occ;
            best_avail = avail;
        }
    }
    return best;
}

TokenSeq continuation(const NGramIndex& idx, const Occurrence& occ, int d) {
    const TokenSeq& seq = idx.sequences[static_cast<size_t>(occ.seq_id)];
    const int from = occ.end_pos + 1;
    const int to = std::min<int>(from + d, static_cast<int>(seq.size()));
    return TokenSeq(seq.begin() + from, seq.begin() + to);
}

}  // namespace

LookupResult HierarchicalDatastore::lookup(std::span<const TokenId> context,
                                           int d) const {
    if (context.empty()) throw std::invalid_argument("lookup: empty context");
    stats.lookups.fetch_add(1, std::memory_order_relaxed);

    const int ctx_len = static_cast<int>(context.size());
    for (int n = std::min(max_order, ctx_len); n >= 1; --n) {
        const TokenSeq key(context.end() - n, context.end());
        struct Layer {
            const NGramIndex* idx;
            LookupSource source;
            std::atomic<long>* counter;
        };
        const Layer layers[] = {
            {&prior, LookupSource::Prior, &stats.prior_hits},
            {&dynamic, LookupSource::Dynamic, &stats.dynamic_hits},
            {&rejected, LookupSource::Rejected, &stats.rejected_hits},
        };
        for (const Layer& layer : layers) {
            if (layer.source == LookupSource::Rejected && !rejected_enabled) continue;
            if (const Occurrence* occ = best_occurrence(*layer.idx, key, d)) {
                layer.counter->fetch_add(1, std::memory_order_relaxed);
                return {continuation(*layer.idx, *occ, d), layer.source, n};
            }
        }
    }

    // PLD-style fallback: longest context suffix that recurs earlier in the
    // context itself; the most recent earlier occurrence wins.
    for (int n = std::min(max_order, ctx_len - 1); n >= 1; --n) {
        for (int end = ctx_len - 2; end >= n - 1; --end) {
            bool match = true;
            for (int j = 0; j < n; ++j) {
                if (context[end - j] != context[ctx_len - 1 - j]) {
                    match = false;
                    break;
                }
            }
            if (match) {
                stats.fallback_hits.fetch_add(1, std::memory_order_relaxed);
                const int from = end + 1;
                const int to = std::min(from + d, ctx_len);
                return {TokenSeq(context.begin() + from, context.begin() + to),
                        LookupSource::ContextFallback, n};
            }
        }
    }

    stats.misses.fetch_add(1, std::memory_order_relaxed);
    return {};
}

void HierarchicalDatastore::record_accepted(std::span<const TokenId> tokens) {
    if (tokens.empty()) return;
    dynamic.insert(tokens, step_counter++);
}

void HierarchicalDatastore::record_rejected(std::span<const TokenId> tokens) {
    if (tokens.empty()) return;
    rejected.insert(tokens, step_counter++);
}

void HierarchicalDatastore::flush_session() {
    dynamic.clear();
    rejected.clear();
}

NGramIndex build_prior(const std::vector<TokenSeq>& corpora, int max_order,
                       int rounds) {
    if (rounds < 0) throw std::invalid_argument("build_prior: rounds must be >= 0");
    NGramIndex idx;
    idx.max_order = max_order;
    const size_t take = std::min<size_t>(corpora.size(), static_cast<size_t>(rounds));
    for (size_t i = 0; i < take; ++i) {
        idx.insert(corpora[i], static_cast<long>(i));
    }
    return idx;
}

std::string serialize_index(const NGramIndex& index) {
    std::ostringstream os;
    os << "dstore-v1 " << index.max_order << ' ' << index.sequences.size() << '\n';
    for (const TokenSeq& seq : index.sequences) {
        for (size_t i = 0; i < seq.size(); ++i) os << (i ? " " : "") << seq[i];
        os << '\n';
    }
    return os.str();
}

NGramIndex parse_index(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int max_order = 0;
    size_t count = 0;
    in >> magic >> max_order >> count;
    if (magic != "dstore-v1") throw std::runtime_error("dstore-v1: bad header");
    std::string line;
    std::getline(in, line);
    NGramIndex idx;
    idx.max_order = max_order;
    for (size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("dstore-v1: truncated");
        std::istringstream ls(line);
        TokenSeq seq;
        long tok;
        while (ls >> tok) seq.push_back(static_cast<TokenId>(tok));
        idx.insert(seq, static_cast<long>(i));
    }
    return idx;
}

void save_index(const NGramIndex& index, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << serialize_index(index);
}

NGramIndex load_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_index(ss.str());
}

}  // namespace specpar
