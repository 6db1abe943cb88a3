#include "specpar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace specpar {

const char* to_string(Method m) {
    switch (m) {
        case Method::VanillaAR: return "vanilla_ar";
        case Method::StandardSD: return "sd";
        case Method::PSD: return "psd";
        case Method::TargetRetrieval: return "target_retrieval";
        case Method::DraftRetrieval: return "draft_retrieval";
        case Method::Double: return "double";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::VanillaAR, Method::StandardSD, Method::PSD,
                     Method::TargetRetrieval, Method::DraftRetrieval,
                     Method::Double}) {
        if (name == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown method: " + name);
}

int ExperimentConfig::effective_gamma() const {
    if (gamma > 0) return gamma;
    return static_cast<int>(std::ceil(latency.speed_ratio()));
}

void ExperimentConfig::validate() const {
    if (vocab < 4) throw std::invalid_argument("vocab must be >= 4");
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho out of [0,1]");
    if (corpus_len < prompt_len + 1) throw std::invalid_argument("corpus too short");
    if (draft_order < 1 || target_order < 1) {
        throw std::invalid_argument("model orders must be >= 1");
    }
    if (smoothing < 0.0) throw std::invalid_argument("smoothing must be >= 0");
    latency.validate();
    if (gamma < 0) throw std::invalid_argument("gamma must be >= 0");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    if (ngram < 1) throw std::invalid_argument("ngram must be >= 1");
    if (prior_rounds < 0) throw std::invalid_argument("prior_rounds must be >= 0");
    if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
    if (prompt_len < 1) throw std::invalid_argument("prompt_len must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key=value");
            }
            continue;
        }
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const size_t b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "vocab") cfg.vocab = std::stoi(val);
            else if (key == "rho") cfg.rho = std::stod(val);
            else if (key == "corpus_len") cfg.corpus_len = std::stoi(val);
            else if (key == "draft_order") cfg.draft_order = std::stoi(val);
            else if (key == "target_order") cfg.target_order = std::stoi(val);
            else if (key == "smoothing") cfg.smoothing = std::stod(val);
            else if (key == "t_target") cfg.latency.t_target = std::stod(val);
            else if (key == "t_draft") cfg.latency.t_draft = std::stod(val);
            else if (key == "t_lookup") cfg.latency.t_lookup = std::stod(val);
            else if (key == "t_sync") cfg.latency.t_sync = std::stod(val);
            else if (key == "gamma") cfg.gamma = std::stoi(val);
            else if (key == "depth") cfg.depth = std::stoi(val);
            else if (key == "ngram") cfg.ngram = std::stoi(val);
            else if (key == "prior_rounds") cfg.prior_rounds = std::stoi(val);
            else if (key == "temperature") cfg.temperature = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "method") cfg.method = parse_method(val);
            else if (key == "max_new_tokens") cfg.max_new_tokens = std::stoi(val);
            else if (key == "prompt_len") cfg.prompt_len = std::stoi(val);
            else if (key == "rejected_cache") cfg.rejected_cache = (val == "1" || val == "true");
            else if (key == "engine") {
                if (val == "serial") cfg.engine = Engine::Serial;
                else if (val == "concurrent") cfg.engine = Engine::Concurrent;
                else throw std::invalid_argument("engine must be serial|concurrent");
            }
            else throw std::invalid_argument("unknown key: " + key);
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": bad value for " + key);
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "vocab=" << cfg.vocab << '\n'
       << "rho=" << cfg.rho << '\n'
       << "corpus_len=" << cfg.corpus_len << '\n'
       << "draft_order=" << cfg.draft_order << '\n'
       << "target_order=" << cfg.target_order << '\n'
       << "smoothing=" << cfg.smoothing << '\n'
       << "t_target=" << cfg.latency.t_target << '\n'
       << "t_draft=" << cfg.latency.t_draft << '\n'
       << "t_lookup=" << cfg.latency.t_lookup << '\n'
       << "t_sync=" << cfg.latency.t_sync << '\n'
       << "gamma=" << cfg.gamma << '\n'
       << "depth=" << cfg.depth << '\n'
       << "ngram=" << cfg.ngram << '\n'
       << "prior_rounds=" << cfg.prior_rounds << '\n'
       << "temperature=" << cfg.temperature << '\n'
       << "seed=" << cfg.seed << '\n'
       << "method=" << to_string(cfg.method) << '\n'
       << "max_new_tokens=" << cfg.max_new_tokens << '\n'
       << "prompt_len=" << cfg.prompt_len << '\n'
       << "rejected_cache=" << (cfg.rejected_cache ? 1 : 0) << '\n'
       << "engine=" << (cfg.engine == Engine::Serial ? "serial" : "concurrent")
       << '\n';
    return os.str();
}

std::vector<TokenSeq> gen_corpus(int vocab, double rho, int length,
                                 std::uint64_t seed) {
    if (vocab < 4) throw std::invalid_argument("vocab must be >= 4");
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho out of [0,1]");
    if (length < 1) throw std::invalid_argument("length must be >= 1");
    Rng rng(splitmix64(seed ^ 0x636f727075730000ULL));
    const int lo = 1, hi = vocab - 2;  // keep clear of BOS and EOS
    TokenSeq stream;
    stream.reserve(static_cast<size_t>(length) + 16);
    while (static_cast<int>(stream.size()) < length) {
        const bool replay = stream.size() >= 4 && rng.uniform() < rho;
        if (replay) {
            const size_t span = 4 + static_cast<size_t>(rng.uniform() * 13.0);  // 4..16
            const size_t start =
                static_cast<size_t>(rng.uniform() * static_cast<double>(stream.size()));
            const size_t end = std::min(start + span, stream.size());
            for (size_t i = start; i < end; ++i) stream.push_back(stream[i]);
        } else {
            const int span = 1 + static_cast<int>(rng.uniform() * 4.0);  // 1..4
            for (int i = 0; i < span; ++i) {
                stream.push_back(static_cast<TokenId>(
                    lo + static_cast<int>(rng.uniform() * (hi - lo + 1))));
            }
        }
    }
    stream.resize(static_cast<size_t>(length));

    constexpr size_t kSeqLen = 64;
    std::vector<TokenSeq> out;
    for (size_t at = 0; at < stream.size(); at += kSeqLen) {
        const size_t end = std::min(at + kSeqLen, stream.size());
        out.emplace_back(stream.begin() + static_cast<long>(at),
                         stream.begin() + static_cast<long>(end));
    }
    return out;
}

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentSetup s;
    s.corpus = gen_corpus(cfg.vocab, cfg.rho, cfg.corpus_len, cfg.seed);
    s.draft_model =
        build_model_from_corpus(s.corpus, cfg.draft_order, cfg.smoothing, cfg.vocab);
    s.target_model =
        build_model_from_corpus(s.corpus, cfg.target_order, cfg.smoothing, cfg.vocab);
    const TokenSeq& first = s.corpus.front();
    if (first.size() < static_cast<size_t>(cfg.prompt_len)) {
        throw std::invalid_argument("prompt_len exceeds the first corpus sequence");
    }
    s.prompt.assign(first.begin(), first.begin() + cfg.prompt_len);
    return s;
}

HierarchicalDatastore build_store(const ExperimentConfig& cfg,
                                  const std::vector<TokenSeq>& corpus) {
    HierarchicalDatastore store(cfg.ngram, cfg.depth);
    store.prior = build_prior(corpus, cfg.ngram, cfg.prior_rounds);
    store.rejected_enabled = cfg.rejected_cache;
    return store;
}

namespace {

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

RunResult run_vanilla_ar(const ExperimentConfig& cfg, const ExperimentSetup& setup) {
    const SamplerConfig sampler{cfg.temperature, cfg.seed};
    Rng rng(splitmix64(cfg.seed ^ 0x6172000000000000ULL));
    const TokenId eos = setup.target_model.vocab_size - 1;
    TokenSeq ctx = setup.prompt;
    RunResult res;
    for (int i = 0; i < cfg.max_new_tokens; ++i) {
        const ProbVector dist = forward(setup.target_model, ctx, nullptr);
        const TokenId tok = sample(dist, sampler, rng);
        ctx.push_back(tok);
        res.output.push_back(tok);
        RoundTrace tr;
        tr.round = i;
        tr.mode = "ar";
        tr.committed_count = 1;
        tr.kind = "ar_step";
        tr.clock_delta = cfg.latency.t_target;
        res.traces.push_back(std::move(tr));
        if (tok == eos) break;
    }
    res.metrics = compute_metrics(res.traces, cfg.latency);
    // One forward per token by definition; keep the ratio exactly 1.
    res.metrics.clock = static_cast<double>(res.metrics.tokens) * cfg.latency.t_target;
    res.metrics.speedup = 1.0;
    return res;
}

// Serial draft-then-verify: gamma draft segments, one batched target forward
// over the whole chain, classic accept-prefix-plus-correction commit. With
// use_retrieval the drafter is retrieval-boosted and the chain can be longer
// than gamma.
RunResult run_serial_sd(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                        bool use_retrieval) {
    const SamplerConfig sampler{cfg.temperature, cfg.seed};
    const int gamma = cfg.effective_gamma();
    const bool greedy = cfg.temperature == 0.0;
    HierarchicalDatastore store = build_store(cfg, setup.corpus);
    const long base_lookups = store.stats.lookups.load();
    const long base_hits = store.stats.hits();
    store.record_accepted(setup.prompt);

    const TokenId eos = setup.target_model.vocab_size - 1;
    TokenSeq committed = setup.prompt;
    const size_t prompt_len = setup.prompt.size();
    RunResult res;
    long round = 0;
    size_t scanned = prompt_len;
    bool done = false;
    while (!done) {
        Rng rng_d = derive_rng(cfg.seed, static_cast<std::uint64_t>(round), 0);
        Rng rng_v = derive_rng(cfg.seed, static_cast<std::uint64_t>(round), 2);
        const DraftChain chain =
            iterative_draft(setup.draft_model, store, committed, gamma, cfg.depth,
                            sampler, rng_d, nullptr, use_retrieval);
        const std::vector<ProbVector> dists =
            forward_batch(setup.target_model, committed, chain.tokens, nullptr);
        std::vector<ProbVector> eff(chain.tokens.size());
        for (size_t k = 0; k < chain.tokens.size(); ++k) {
            eff[k] = greedy ? dists[k] : tempered(dists[k], cfg.temperature);
        }
        const std::optional<int> rej = verify_against_target(
            chain.tokens, chain.probs, eff, sampler, rng_v);

        RoundTrace tr;
        tr.round = round;
        tr.mode = "serial";
        tr.draft_len = chain.total_len;
        if (use_retrieval) {
            for (const RetrievalResult& seg : chain.segments) {
                tr.draft_matched.push_back(seg.matched_len);
            }
        }
        TokenSeq committed_add;
        if (rej) {
            const int k = *rej;
            tr.accepted_pending = k;
            tr.pending_reject = true;
            tr.rejected = true;
            tr.kind = "reject";
            committed_add.assign(chain.tokens.begin(), chain.tokens.begin() + k);
            if (greedy) {
                committed_add.push_back(
                    argmax_token(dists[static_cast<size_t>(k)]));
            } else {
                committed_add.push_back(residual_sample(
                    eff[static_cast<size_t>(k)], chain.probs[static_cast<size_t>(k)],
                    rng_v));
            }
            TokenSeq pre = committed;
            pre.insert(pre.end(), chain.tokens.begin(), chain.tokens.begin() + k);
            record_rejected_run(
                store, pre,
                std::span<const TokenId>(chain.tokens).subspan(static_cast<size_t>(k)));
        } else {
            tr.accepted_pending = chain.total_len;
            tr.kind = "all_accepted";
            committed_add = chain.tokens;
            committed_add.push_back(sample(dists.back(), sampler, rng_v));
        }
        tr.committed_count = static_cast<int>(committed_add.size());
        tr.clock_delta =
            gamma * (cfg.latency.t_draft +
                     (use_retrieval ? cfg.latency.t_lookup : 0.0)) +
            cfg.latency.t_target + cfg.latency.t_sync;
        record_accepted_run(store, committed, committed_add);
        committed.insert(committed.end(), committed_add.begin(), committed_add.end());
        res.traces.push_back(std::move(tr));
        ++round;

        for (; scanned < committed.size(); ++scanned) {
            if (committed[scanned] == eos) {
                committed.resize(scanned + 1);
                done = true;
                break;
            }
        }
        if (committed.size() - prompt_len >= static_cast<size_t>(cfg.max_new_tokens)) {
            done = true;
        }
        if (round > 1000000) {
            throw std::runtime_error("round limit exceeded; decoder stalled");
        }
    }
    res.output.assign(committed.begin() + static_cast<long>(prompt_len),
                      committed.end());
    if (res.output.size() > static_cast<size_t>(cfg.max_new_tokens)) {
        res.output.resize(static_cast<size_t>(cfg.max_new_tokens));
    }
    res.metrics = compute_metrics(res.traces, cfg.latency);
    res.metrics.lookups = store.stats.lookups.load() - base_lookups;
    res.metrics.hit_rate =
        res.metrics.lookups == 0
            ? 0.0
            : static_cast<double>(store.stats.hits() - base_hits) /
                  static_cast<double>(res.metrics.lookups);
    return res;
}

RunResult run_pipelined(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                        bool draft_retrieval, bool target_retrieval,
                        bool rejected_cache) {
    ExperimentConfig c = cfg;
    c.rejected_cache = rejected_cache;
    HierarchicalDatastore store = build_store(c, setup.corpus);
    PipelineOptions opts;
    opts.gamma = cfg.effective_gamma();
    opts.depth = cfg.depth;
    opts.draft_retrieval = draft_retrieval;
    opts.target_retrieval = target_retrieval;
    opts.engine = cfg.engine;
    opts.sampler = SamplerConfig{cfg.temperature, cfg.seed};
    opts.latency = cfg.latency;
    return run(setup.draft_model, setup.target_model, store, setup.prompt,
               cfg.max_new_tokens, opts);
}

ReportRow row_from(const std::string& label, const RunResult& res) {
    ReportRow row;
    row.label = label;
    row.m = res.metrics.m;
    row.amt = res.metrics.amt;
    row.speedup = res.metrics.speedup;
    row.hit_rate = res.metrics.hit_rate;
    row.tokens = res.metrics.tokens;
    row.clock = res.metrics.clock;
    return row;
}

}  // namespace

ReportRow run_method_on(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                        Method method, RunResult* result_out) {
    RunResult res;
    switch (method) {
        case Method::VanillaAR:
            res = run_vanilla_ar(cfg, setup);
            break;
        case Method::StandardSD:
            res = run_serial_sd(cfg, setup, false);
            break;
        case Method::DraftRetrieval:
            res = run_serial_sd(cfg, setup, true);
            break;
        case Method::PSD:
            res = run_pipelined(cfg, setup, false, false, cfg.rejected_cache);
            break;
        case Method::TargetRetrieval:
            res = run_pipelined(cfg, setup, false, true, cfg.rejected_cache);
            break;
        case Method::Double:
            res = run_pipelined(cfg, setup, true, true, cfg.rejected_cache);
            break;
    }
    ReportRow row = row_from(to_string(method), res);
    if (result_out) *result_out = std::move(res);
    return row;
}

ReportRow run_method(const ExperimentConfig& cfg) {
    const ExperimentSetup setup = build_setup(cfg);
    return run_method_on(cfg, setup, cfg.method);
}

Report ablate(const ExperimentConfig& cfg) {
    const ExperimentSetup setup = build_setup(cfg);
    Report rep;
    rep.seed = cfg.seed;
    rep.config_echo = serialize_config(cfg);
    rep.rows.push_back(row_from(
        "double", run_pipelined(cfg, setup, true, true, cfg.rejected_cache)));
    rep.rows.push_back(row_from(
        "wo_draft_retrieval",
        run_pipelined(cfg, setup, false, true, cfg.rejected_cache)));
    rep.rows.push_back(row_from(
        "wo_target_retrieval",
        run_pipelined(cfg, setup, true, false, cfg.rejected_cache)));
    rep.rows.push_back(
        row_from("wo_rejected_cache", run_pipelined(cfg, setup, true, true, false)));
    {
        ExperimentConfig c = cfg;
        c.prior_rounds = 0;
        rep.rows.push_back(row_from(
            "wo_prior", run_pipelined(c, setup, true, true, cfg.rejected_cache)));
    }
    return rep;
}

Report sweep_depth(const ExperimentConfig& cfg, const std::vector<int>& depths) {
    const ExperimentSetup setup = build_setup(cfg);
    Report rep;
    rep.seed = cfg.seed;
    rep.config_echo = serialize_config(cfg);
    for (int d : depths) {
        ExperimentConfig c = cfg;
        c.depth = d;
        rep.rows.push_back(
            row_from("d=" + std::to_string(d),
                     run_pipelined(c, setup, true, true, cfg.rejected_cache)));
    }
    return rep;
}

std::string emit_report(const std::vector<ReportRow>& rows,
                        const std::string& format) {
    std::ostringstream os;
    char buf[256];
    if (format == "csv") {
        os << "method,m,amt,speedup,hit_rate,tokens,clock\n";
        for (const ReportRow& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%ld,%.6g\n",
                          r.label.c_str(), r.m, r.amt, r.speedup, r.hit_rate,
                          r.tokens, r.clock);
            os << buf;
        }
    } else if (format == "text") {
        std::snprintf(buf, sizeof(buf), "%-22s %10s %8s %9s %9s %8s %10s\n",
                      "method", "M", "AMT", "speedup", "hit_rate", "tokens",
                      "clock");
        os << buf;
        for (const ReportRow& r : rows) {
            std::snprintf(buf, sizeof(buf),
                          "%-22s %10.4f %8.4f %9.4f %9.4f %8ld %10.2f\n",
                          r.label.c_str(), r.m, r.amt, r.speedup, r.hit_rate,
                          r.tokens, r.clock);
            os << buf;
        }
    } else {
        throw std::invalid_argument("format must be csv|text");
    }
    return os.str();
}

void write_report(const Report& report, const std::string& path,
                  const std::string& format) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    if (format == "text" && !report.config_echo.empty()) {
        std::istringstream echo(report.config_echo);
        std::string line;
        while (std::getline(echo, line)) out << "# " << line << '\n';
    }
    out << emit_report(report.rows, format);
}

}  // namespace specpar
