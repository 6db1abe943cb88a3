#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "specpar/analytics.hpp"
#include "specpar/harness.hpp"

namespace {

using namespace specpar;

std::vector<TokenSeq> load_corpus_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<TokenSeq> out;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        TokenSeq seq;
        long tok;
        while (ls >> tok) seq.push_back(static_cast<TokenId>(tok));
        if (!seq.empty()) out.push_back(std::move(seq));
    }
    return out;
}

void save_corpus_lines(const std::vector<TokenSeq>& corpus,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const TokenSeq& seq : corpus) {
        for (size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
        out << '\n';
    }
}

void apply_seed_override(ExperimentConfig& cfg) {
    if (const char* env = std::getenv("SPECPAR_SEED")) {
        cfg.seed = std::stoull(env);
    }
}

std::vector<double> parse_list_d(const std::string& csv) {
    std::vector<double> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_list_i(const std::string& csv) {
    std::vector<int> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"speculative decoding laboratory"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
    int g_vocab = 32, g_length = 4096;
    double g_rho = 0.5;
    std::uint64_t g_seed = 1;
    std::string g_out = "corpus.txt";
    gen->add_option("--vocab", g_vocab);
    gen->add_option("--rho", g_rho);
    gen->add_option("--length", g_length);
    gen->add_option("--seed", g_seed);
    gen->add_option("--out", g_out);

    // build-prior
    auto* prior = app.add_subcommand("build-prior", "index a corpus into a prior datastore");
    std::string p_corpus, p_out = "prior.dstore";
    int p_ngram = 3, p_rounds = 10;
    prior->add_option("--corpus", p_corpus)->required();
    prior->add_option("--ngram", p_ngram);
    prior->add_option("--rounds", p_rounds);
    prior->add_option("--out", p_out);

    // run
    auto* runc = app.add_subcommand("run", "run one decoding method");
    std::string r_config, r_trace, r_report, r_format = "text";
    runc->add_option("--config", r_config)->required();
    runc->add_option("--trace", r_trace);
    runc->add_option("--report", r_report);
    runc->add_option("--format", r_format);

    // ablate
    auto* abl = app.add_subcommand("ablate", "component ablation table");
    std::string a_config, a_out, a_format = "text";
    abl->add_option("--config", a_config)->required();
    abl->add_option("--out", a_out);
    abl->add_option("--format", a_format);

    // sweep-depth
    auto* swd = app.add_subcommand("sweep-depth", "retrieval depth sweep");
    std::string d_config, d_out, d_format = "text", d_depths = "1,2,5,10,20";
    swd->add_option("--config", d_config)->required();
    swd->add_option("--depths", d_depths);
    swd->add_option("--out", d_out);
    swd->add_option("--format", d_format);

    // sweep
    auto* swp = app.add_subcommand("sweep", "closed-form speedup grid as CSV");
    std::string s_alphas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    std::string s_gammas = "1,2,4,8", s_cs = "1.6,2.8,4,5", s_out;
    swp->add_option("--alphas", s_alphas);
    swp->add_option("--gammas", s_gammas);
    swp->add_option("--cs", s_cs);
    swp->add_option("--out", s_out);

    // analyze
    auto* ana = app.add_subcommand("analyze", "evaluate the closed forms at one point");
    double an_alpha = 0.8, an_c = 4.0, an_amt = -1.0, an_eld = -1.0, an_ebonus = 0.0;
    int an_gamma = 4;
    ana->add_option("--alpha", an_alpha);
    ana->add_option("--gamma", an_gamma);
    ana->add_option("--c", an_c);
    ana->add_option("--amt", an_amt);
    ana->add_option("--eld", an_eld);
    ana->add_option("--ebonus", an_ebonus);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            save_corpus_lines(gen_corpus(g_vocab, g_rho, g_length, g_seed), g_out);
            std::printf("wrote %s\n", g_out.c_str());
        } else if (*prior) {
            const auto corpus = load_corpus_lines(p_corpus);
            save_index(build_prior(corpus, p_ngram, p_rounds), p_out);
            std::printf("wrote %s\n", p_out.c_str());
        } else if (*runc) {
            ExperimentConfig cfg = load_config(r_config);
            apply_seed_override(cfg);
            const ExperimentSetup setup = build_setup(cfg);
            RunResult res;
            const ReportRow row = run_method_on(cfg, setup, cfg.method, &res);
            if (!r_trace.empty()) write_traces(res.traces, r_trace);
            std::fputs(emit_report({row}, "text").c_str(), stdout);
            if (!r_report.empty()) {
                Report rep;
                rep.rows.push_back(row);
                rep.seed = cfg.seed;
                rep.config_echo = serialize_config(cfg);
                write_report(rep, r_report, r_format);
            }
        } else if (*abl) {
            ExperimentConfig cfg = load_config(a_config);
            apply_seed_override(cfg);
            const Report rep = ablate(cfg);
            std::fputs(emit_report(rep.rows, "text").c_str(), stdout);
            if (!a_out.empty()) write_report(rep, a_out, a_format);
        } else if (*swd) {
            ExperimentConfig cfg = load_config(d_config);
            apply_seed_override(cfg);
            const Report rep = sweep_depth(cfg, parse_list_i(d_depths));
            std::fputs(emit_report(rep.rows, "text").c_str(), stdout);
            if (!d_out.empty()) write_report(rep, d_out, d_format);
        } else if (*swp) {
            std::ostringstream os;
            os << "alpha,gamma,c,e_single,k,e_multi,s_sd,s_psd,psd_bound\n";
            for (double a : parse_list_d(s_alphas)) {
                for (int g : parse_list_i(s_gammas)) {
                    for (double c : parse_list_d(s_cs)) {
                        const double k = expected_rounds(a, g);
                        char buf[256];
                        std::snprintf(buf, sizeof(buf),
                                      "%g,%d,%g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                                      a, g, c, expected_single_round(a, g), k,
                                      expected_multi_round(a, g),
                                      speedup_sd(a, g, c), speedup_psd(a, g, c),
                                      k * g * c / (k * g + c));
                        os << buf;
                    }
                }
            }
            if (s_out.empty()) {
                std::fputs(os.str().c_str(), stdout);
            } else {
                std::ofstream f(s_out);
                if (!f) throw std::runtime_error("cannot write " + s_out);
                f << os.str();
            }
        } else if (*ana) {
            const double k = expected_rounds(an_alpha, an_gamma);
            std::printf("e_single %.6f\n", expected_single_round(an_alpha, an_gamma));
            std::printf("k        %.6f\n", k);
            std::printf("e_multi  %.6f\n", expected_multi_round(an_alpha, an_gamma));
            std::printf("s_sd     %.6f\n", speedup_sd(an_alpha, an_gamma, an_c));
            std::printf("s_psd    %.6f\n", speedup_psd(an_alpha, an_gamma, an_c));
            if (an_amt >= 0.0 && an_eld >= 0.0) {
                TheoryParams tp;
                tp.alpha = an_alpha;
                tp.gamma = an_gamma;
                tp.c = an_c;
                tp.amt = an_amt;
                tp.e_ld = an_eld;
                tp.e_bonus = an_ebonus;
                std::printf("s_double %.6f\n", speedup_double(tp, k, an_gamma));
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
