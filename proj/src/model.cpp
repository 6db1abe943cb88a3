#include "specpar/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace specpar {

namespace {

TokenSeq window_of(int order, std::span<const TokenId> context) {
    TokenSeq w(static_cast<size_t>(order), kBosToken);
    const size_t n = context.size();
    const size_t take = std::min<size_t>(n, static_cast<size_t>(order));
    for (size_t i = 0; i < take; ++i) {
        w[order - take + i] = context[n - take + i];
    }
    return w;
}

const ProbVector& row_for(const TableModel& model, std::span<const TokenId> context) {
    auto it = model.table.find(window_of(model.order, context));
    return it == model.table.end() ? model.fallback : it->second;
}

}  // namespace

ProbVector forward(const TableModel& model, std::span<const TokenId> context,
                   SimClock* clock) {
    if (context.empty()) throw std::invalid_argument("forward: empty context");
    if (clock) clock->charge(model.forward_cost);
    return row_for(model, context);
}

std::vector<ProbVector> forward_batch(const TableModel& model,
                                      std::span<const TokenId> context,
                                      std::span<const TokenId> candidates,
                                      SimClock* clock) {
    if (context.empty()) throw std::invalid_argument("forward_batch: empty context");
    if (clock) clock->charge(model.forward_cost);  // one parallel pass

    std::vector<ProbVector> out;
    out.reserve(candidates.size() + 1);
    TokenSeq ctx(context.begin(), context.end());
    out.push_back(row_for(model, ctx));
    for (TokenId tok : candidates) {
        ctx.push_back(tok);
        out.push_back(row_for(model, ctx));
    }
    return out;
}

ProbVector tempered(const ProbVector& dist, double temperature) {
    if (temperature == 1.0) return dist;
    ProbVector out(dist.size(), 0.0);
    double sum = 0.0;
    for (size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > 0.0) {
            out[i] = std::pow(dist[i], 1.0 / temperature);
            sum += out[i];
        }
    }
    if (sum <= 0.0) throw std::runtime_error("degenerate distribution");
    for (double& v : out) v /= sum;
    return out;
}

TokenId argmax_token(const ProbVector& dist) {
    TokenId best = 0;
    double best_p = -1.0;
    for (size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > best_p) {  // strict: ties keep the lowest id
            best_p = dist[i];
            best = static_cast<TokenId>(i);
        }
    }
    if (best_p <= 0.0) throw std::runtime_error("degenerate distribution");
    return best;
}

TokenId sample(const ProbVector& dist, const SamplerConfig& cfg, Rng& rng) {
    if (cfg.temperature == 0.0) return argmax_token(dist);
    const ProbVector p = tempered(dist, cfg.temperature);
    const double u = rng.uniform();
    double acc = 0.0;
    TokenId last_positive = -1;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        last_positive = static_cast<TokenId>(i);
        acc += p[i];
        if (u < acc) return last_positive;
    }
    if (last_positive < 0) throw std::runtime_error("degenerate distribution");
    return last_positive;  // u landed in rounding slack at the tail
}

TableModel build_model_from_corpus(const std::vector<TokenSeq>& corpus, int order,
                                   double smoothing, int vocab_size) {
    if (corpus.empty()) throw std::invalid_argument("empty corpus");
    if (order < 1) throw std::invalid_argument("order must be >= 1");
    if (smoothing < 0.0) throw std::invalid_argument("smoothing must be >= 0");

    TableModel model;
    model.order = order;
    model.vocab_size = vocab_size;
    model.smoothing = smoothing;

    std::map<TokenSeq, std::vector<double>> counts;
    std::vector<double> global_counts(static_cast<size_t>(vocab_size), 0.0);
    for (const TokenSeq& seq : corpus) {
        for (size_t i = 0; i < seq.size(); ++i) {
            if (seq[i] < 0 || seq[i] >= vocab_size) {
                throw std::invalid_argument("corpus token out of range");
            }
            global_counts[static_cast<size_t>(seq[i])] += 1.0;
            if (i + 1 < seq.size()) {
                const size_t lo = i + 1 >= static_cast<size_t>(order) ? i + 1 - order : 0;
                TokenSeq w = window_of(order,
                                       std::span<const TokenId>(seq.data() + lo, i + 1 - lo));
                auto& row = counts[w];
                row.resize(static_cast<size_t>(vocab_size), 0.0);
                row[static_cast<size_t>(seq[i + 1])] += 1.0;
            }
        }
    }

    auto normalize = [&](const std::vector<double>& row) {
        ProbVector p(static_cast<size_t>(vocab_size), 0.0);
        double sum = 0.0;
        for (size_t t = 0; t < p.size(); ++t) {
            p[t] = row[t] + smoothing;
            sum += p[t];
        }
        if (sum <= 0.0) throw std::runtime_error("empty count row");
        for (double& v : p) v /= sum;
        return p;
    };

    for (auto& [w, row] : counts) model.table[w] = normalize(row);

    // Unseen windows fall back to the smoothed unigram distribution.
    double gsum = 0.0;
    for (double c : global_counts) gsum += c;
    model.fallback.resize(static_cast<size_t>(vocab_size));
    for (size_t t = 0; t < model.fallback.size(); ++t) {
        model.fallback[t] = (global_counts[t] + std::max(smoothing, 1e-12)) /
                            (gsum + std::max(smoothing, 1e-12) * vocab_size);
    }
    return model;
}

namespace {

void write_probs(std::ostream& os, const ProbVector& p) {
    char buf[64];
    for (double v : p) {
        std::snprintf(buf, sizeof(buf), " %.17g", v);
        os << buf;
    }
}

ProbVector read_probs(std::istringstream& is, int vocab_size) {
    ProbVector p(static_cast<size_t>(vocab_size));
    for (double& v : p) {
        if (!(is >> v)) throw std::runtime_error("model-v1: truncated probability row");
    }
    return p;
}

}  // namespace

std::string serialize_model(const TableModel& model) {
    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", model.smoothing);
    os << "model-v1 " << model.vocab_size << ' ' << model.order << ' ' << buf << '\n';
    for (const auto& [w, p] : model.table) {
        for (size_t i = 0; i < w.size(); ++i) os << (i ? " " : "") << w[i];
        os << " :";
        write_probs(os, p);
        os << '\n';
    }
    os << "fallback :";
    write_probs(os, model.fallback);
    os << '\n';
    return os.str();
}

TableModel parse_model(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("model-v1: empty file");
    std::istringstream head(line);
    std::string magic;
    TableModel model;
    head >> magic >> model.vocab_size >> model.order >> model.smoothing;
    if (magic != "model-v1") throw std::runtime_error("model-v1: bad header");

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string first;
        ls >> first;
        if (first == "fallback") {
            std::string colon;
            ls >> colon;
            model.fallback = read_probs(ls, model.vocab_size);
            continue;
        }
        TokenSeq w;
        w.push_back(static_cast<TokenId>(std::stol(first)));
        std::string tok;
        while (ls >> tok && tok != ":") w.push_back(static_cast<TokenId>(std::stol(tok)));
        if (static_cast<int>(w.size()) != model.order) {
            throw std::runtime_error("model-v1: window length mismatch");
        }
        model.table[w] = read_probs(ls, model.vocab_size);
    }
    if (model.fallback.empty()) throw std::runtime_error("model-v1: missing fallback row");
    return model;
}

void save_model(const TableModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << serialize_model(model);
}

TableModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str());
}

}  // namespace specpar
