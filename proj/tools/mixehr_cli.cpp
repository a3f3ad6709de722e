// mixehr: command-line front end for synthetic data generation, online
// training, inference and analysis of multi-category topic models.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixehr/analysis.hpp"
#include "mixehr/corpus.hpp"
#include "mixehr/error.hpp"
#include "mixehr/evaluation.hpp"
#include "mixehr/synth.hpp"
#include "mixehr/trainer.hpp"

namespace fs = std::filesystem;
using namespace mixehr;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;
    bool quiet = false;

    ExecPolicy exec() const { return {threads, deterministic}; }
};

void note(const Globals& g, const std::string& msg) {
    if (!g.quiet) std::cerr << msg << '\n';
}

// Writes to `path`, or stdout when the path is empty or "-".
template <class F>
void write_output(const std::string& path, F&& body) {
    if (path.empty() || path == "-") {
        body(std::cout);
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    body(out);
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

// Vocabularies for a checkpoint: an explicit directory wins, then the copies
// stored with the checkpoint, then generated placeholder codes.
std::vector<Vocabulary> resolve_vocabs(const ModelState& model, const std::string& model_dir,
                                       const std::string& vocab_dir) {
    std::vector<Vocabulary> vocabs;
    if (!vocab_dir.empty())
        vocabs = load_vocab_dir(vocab_dir);
    else if (auto stored = load_checkpoint_vocabs(model_dir))
        vocabs = std::move(*stored);
    else
        vocabs = placeholder_vocabs(model);
    if (vocabs.size() != model.num_categories())
        throw ValidationError("vocabularies do not match the model's categories");
    for (std::size_t t = 0; t < vocabs.size(); ++t)
        if (vocabs[t].category() != model.category_names[t] ||
            vocabs[t].size() != model.lambda[t].cols)
            throw ValidationError("vocabulary '" + vocabs[t].category() +
                                  "' does not match model category '" + model.category_names[t] +
                                  "'");
    return vocabs;
}

std::size_t category_index(const ModelState& model, const std::string& name) {
    for (std::size_t t = 0; t < model.num_categories(); ++t)
        if (model.category_names[t] == name) return t;
    throw ValidationError("model has no category '" + name + "'");
}

// Training flags shared by train and sweep.
struct TrainFlags {
    std::size_t K = 10;
    double alpha = 0.0;
    std::vector<double> eta;
    double tau0 = 256.0;
    double kappa = 0.7;
    std::size_t batch_size = 1024;
    std::size_t passes = 1;
    double tol = 1e-3;
    int max_iters = 100;
    double rho = 0.0;
    std::string gamma_avg = "all";
    bool no_elbo = false;

    void add_to(CLI::App* app, bool with_k) {
        if (with_k) app->add_option("--k", K, "Number of topics")->check(CLI::PositiveNumber);
        app->add_option("--alpha", alpha, "Document-topic prior (default 1/K)")
            ->check(CLI::PositiveNumber);
        app->add_option("--eta", eta, "Topic-word prior, one value or one per category")
            ->delimiter(',');
        app->add_option("--tau0", tau0, "Learning-rate delay")->check(CLI::NonNegativeNumber);
        app->add_option("--kappa", kappa, "Learning-rate decay in (0.5, 1]");
        app->add_option("--batch-size", batch_size, "Documents per minibatch")
            ->check(CLI::PositiveNumber);
        app->add_option("--passes", passes, "Passes over the corpus")->check(CLI::PositiveNumber);
        app->add_option("--tol", tol, "E-step tolerance on mean |delta gamma|");
        app->add_option("--max-iters", max_iters, "E-step iteration cap")
            ->check(CLI::PositiveNumber);
        app->add_option("--rho", rho, "Fixed learning rate in (0, 1], overrides the schedule");
        app->add_option("--gamma-avg", gamma_avg, "Category averaging: all | per-present")
            ->check(CLI::IsMember({"all", "per-present"}));
        app->add_flag("--no-elbo", no_elbo, "Skip the per-step ELBO estimate");
    }

    TrainConfig config(const Globals& g) const {
        TrainConfig cfg;
        cfg.K = K;
        if (alpha > 0.0) cfg.alpha = alpha;
        cfg.eta = eta;
        cfg.tau0 = tau0;
        cfg.kappa = kappa;
        cfg.batch_size = batch_size;
        cfg.passes = passes;
        cfg.seed = g.seed;
        cfg.tol = tol;
        cfg.max_iters = max_iters;
        if (rho > 0.0) cfg.fixed_rho = rho;
        cfg.gamma_avg = parse_gamma_averaging(gamma_avg);
        cfg.compute_elbo = !no_elbo;
        cfg.exec = g.exec();
        return cfg;
    }
};

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online variational inference for multi-category topic models"};
    app.set_config("--config", "", "INI/TOML file with option defaults; flags win");
    app.set_version_flag("--version", std::string("mixehr ") + kVersion + " (checkpoint format " +
                                          std::to_string(kCheckpointFormatVersion) + ")");
    app.require_subcommand(1);

    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->configurable();
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic", g.deterministic, "Fixed reduction order across threads");
    app.add_flag("--quiet", g.quiet, "Suppress progress on stderr");
    app.fallthrough();

    // synth ------------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
    std::size_t s_k = 5, s_cats = 3, s_docs = 1000, s_syn_pairs = 0, s_cohorts = 0,
                s_cohort_size = 100;
    std::vector<std::size_t> s_vocab, s_len{50};
    std::vector<std::string> s_names;
    std::vector<double> s_eta{0.05};
    double s_alpha = 0.1, s_syn_eps = 0.05, s_boost = 0.8;
    std::string s_syn_cat, s_out;
    bool s_poisson = false;
    synth->add_option("--k", s_k, "Number of topics (>= 2)");
    synth->add_option("--cats", s_cats, "Number of categories")->check(CLI::PositiveNumber);
    synth->add_option("--cat-names", s_names, "Category names")->delimiter(',');
    synth->add_option("--vocab", s_vocab, "Vocabulary size per category")
        ->delimiter(',')
        ->required();
    synth->add_option("--docs", s_docs, "Number of documents")->check(CLI::PositiveNumber);
    synth->add_option("--len", s_len, "Tokens per category per document")->delimiter(',');
    synth->add_flag("--poisson-len", s_poisson, "Poisson document lengths with mean --len");
    synth->add_option("--alpha", s_alpha, "Document-topic concentration")
        ->check(CLI::PositiveNumber);
    synth->add_option("--eta", s_eta, "Topic-word concentration")->delimiter(',');
    synth->add_option("--synonym-pairs", s_syn_pairs, "Planted synonym pairs");
    synth->add_option("--synonym-eps", s_syn_eps, "Synonym column noise");
    synth->add_option("--synonym-cat", s_syn_cat, "Category for synonyms (default: last)");
    synth->add_option("--cohorts", s_cohorts, "Planted cohorts, cohort i on topic i");
    synth->add_option("--cohort-size", s_cohort_size, "Documents per cohort");
    synth->add_option("--cohort-boost", s_boost, "Weight on the cohort topic in (0, 1)");
    synth->add_option("--out", s_out, "Output bundle directory")->required();

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Fit a model with online variational Bayes");
    std::string t_corpus, t_vocab, t_out, t_report, t_init;
    std::size_t t_ckpt_every = 0;
    double t_eval = 0.0;
    TrainFlags t_flags;
    train->add_option("--corpus", t_corpus, "Corpus JSONL")->required();
    train->add_option("--vocab-dir", t_vocab, "Vocabulary directory")->required();
    train->add_option("--out", t_out, "Checkpoint directory")->required();
    train->add_option("--report", t_report, "Step report TSV (default stdout)");
    train->add_option("--init-model", t_init, "Continue from this checkpoint");
    train->add_option("--checkpoint-every", t_ckpt_every, "Save every N steps");
    train->add_option("--eval-fraction", t_eval, "Token holdout ratio for per-pass perplexity");
    t_flags.add_to(train, true);

    // infer ------------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "Per-document topic loadings");
    std::string i_model, i_corpus, i_vocab, i_out;
    double i_tol = 1e-3;
    int i_iters = 100;
    infer->add_option("--model", i_model, "Checkpoint directory")->required();
    infer->add_option("--corpus", i_corpus, "Corpus JSONL")->required();
    infer->add_option("--vocab-dir", i_vocab, "Vocabulary directory");
    infer->add_option("--out", i_out, "Loadings TSV")->required();
    infer->add_option("--tol", i_tol, "E-step tolerance");
    infer->add_option("--max-iters", i_iters, "E-step iteration cap");

    // topics -----------------------------------------------------------------
    auto* topics = app.add_subcommand("topics", "Top codes per topic and category");
    std::string tp_model, tp_vocab, tp_out;
    std::size_t tp_n = 10;
    topics->add_option("--model", tp_model, "Checkpoint directory")->required();
    topics->add_option("--vocab-dir", tp_vocab, "Vocabulary directory");
    topics->add_option("--top-n", tp_n, "Codes per topic and category")
        ->check(CLI::PositiveNumber);
    topics->add_option("--out", tp_out, "Topics TSV (default stdout)");

    // perplexity -------------------------------------------------------------
    auto* perp = app.add_subcommand("perplexity", "Held-out perplexity by document completion");
    std::string p_model, p_corpus, p_vocab, p_out;
    double p_ratio = 0.5, p_tol = 1e-3;
    int p_iters = 100;
    perp->add_option("--model", p_model, "Checkpoint directory")->required();
    perp->add_option("--corpus", p_corpus, "Corpus JSONL")->required();
    perp->add_option("--vocab-dir", p_vocab, "Vocabulary directory");
    perp->add_option("--ratio", p_ratio, "Fraction of tokens held out");
    perp->add_option("--tol", p_tol, "E-step tolerance");
    perp->add_option("--max-iters", p_iters, "E-step iteration cap");
    perp->add_option("--out", p_out, "Perplexity TSV (default stdout)");

    // sweep ------------------------------------------------------------------
    auto* sweep = app.add_subcommand("sweep", "Train one model per K and compare perplexity");
    std::string w_corpus, w_vocab, w_out;
    std::vector<std::size_t> w_ks;
    double w_ratio = 0.2;
    TrainFlags w_flags;
    sweep->add_option("--corpus", w_corpus, "Corpus JSONL")->required();
    sweep->add_option("--vocab-dir", w_vocab, "Vocabulary directory")->required();
    sweep->add_option("--ks", w_ks, "Topic counts to try")->delimiter(',')->required();
    sweep->add_option("--ratio", w_ratio, "Fraction of tokens held out");
    sweep->add_option("--out", w_out, "Sweep TSV (default stdout)");
    w_flags.add_to(sweep, false);

    // similarity -------------------------------------------------------------
    auto* simil = app.add_subcommand("similarity", "Cosine similarity and code groups");
    std::string m_model, m_cat, m_vocab, m_out, m_groups, m_mode = "uniform";
    double m_threshold = 0.8;
    simil->add_option("--model", m_model, "Checkpoint directory")->required();
    simil->add_option("--category", m_cat, "Category name")->required();
    simil->add_option("--vocab-dir", m_vocab, "Vocabulary directory");
    simil->add_option("--threshold", m_threshold, "Grouping threshold in (0, 1)");
    simil->add_option("--code-vector", m_mode, "uniform | weighted")
        ->check(CLI::IsMember({"uniform", "weighted"}));
    simil->add_option("--out", m_out, "Similarity CSV")->required();
    simil->add_option("--groups-out", m_groups, "Groups TSV");

    // cohorts ----------------------------------------------------------------
    auto* coh = app.add_subcommand("cohorts", "Topic loading summaries per cohort");
    std::string c_model, c_corpus, c_vocab, c_cohorts, c_out, c_loadings;
    coh->add_option("--model", c_model, "Checkpoint directory")->required();
    coh->add_option("--corpus", c_corpus, "Corpus JSONL")->required();
    coh->add_option("--vocab-dir", c_vocab, "Vocabulary directory");
    coh->add_option("--cohorts", c_cohorts, "Cohort TSV")->required();
    coh->add_option("--out", c_out, "Cohort report TSV (default stdout)");
    coh->add_option("--loadings-out", c_loadings, "Also write the loadings TSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "mixehr: usage error: " << one_line(e.what()) << '\n';
        return 1;
    }

    try {
        if (*synth) {
            const std::size_t T = s_cats;
            if (s_vocab.size() == 1) s_vocab.assign(T, s_vocab.front());
            if (s_vocab.size() != T) throw ValidationError("--vocab needs one size per category");
            if (s_eta.size() == 1) s_eta.assign(T, s_eta.front());
            if (s_eta.size() != T) throw ValidationError("--eta needs one value per category");
            auto names = s_names.empty() ? default_category_names(T) : s_names;
            auto gt = generate_model(s_k, s_vocab, s_alpha, s_eta, g.seed, names);
            std::size_t syn_cat = T - 1;
            if (!s_syn_cat.empty()) {
                auto it = std::find(names.begin(), names.end(), s_syn_cat);
                if (it == names.end()) throw ValidationError("unknown --synonym-cat " + s_syn_cat);
                syn_cat = static_cast<std::size_t>(it - names.begin());
            }
            plant_synonyms(gt, syn_cat, s_syn_pairs, s_syn_eps, g.seed);
            auto corpus = generate_corpus(gt, s_docs, s_len, g.seed, s_poisson);
            if (s_cohorts > 0) {
                std::vector<std::pair<std::string, std::size_t>> ct;
                for (std::size_t c = 0; c < s_cohorts; ++c)
                    ct.emplace_back("cohort" + std::to_string(c), c % s_k);
                plant_cohorts(gt, corpus, ct, s_cohort_size, s_boost, g.seed);
            }
            if (!gt.empty_docs.empty())
                note(g, "warning: " + std::to_string(gt.empty_docs.size()) + " empty documents");
            save_bundle(s_out, gt, corpus);
            note(g, "wrote " + std::to_string(corpus.size()) + " documents to " + s_out);
        } else if (*train) {
            auto cfg = t_flags.config(g);
            cfg.eval_fraction = t_eval;
            cfg.checkpoint_every = t_ckpt_every;
            cfg.checkpoint_dir = t_out;
            cfg.validate();
            auto vocabs = load_vocab_dir(t_vocab);
            auto corpus = load_corpus(t_corpus, vocabs);
            note(g, "loaded " + std::to_string(corpus.size()) + " documents");

            std::optional<std::pair<MultiCorpus, MultiCorpus>> split;
            const MultiCorpus* fit_on = &corpus;
            Validation validation;
            if (t_eval > 0.0) {
                split = split_holdout(corpus, t_eval, g.seed);
                fit_on = &split->first;
                validation = {&split->first, &split->second};
            }
            const ProgressFn progress = [&](const StepRecord& r) {
                if (!g.quiet)
                    std::fprintf(stderr, "step %llu rho %.6g elbo %.6g docs/s %.1f\n",
                                 static_cast<unsigned long long>(r.step), r.rho, r.elbo,
                                 r.docs_per_sec);
            };
            TrainResult result =
                t_init.empty()
                    ? train_online(*fit_on, cfg, validation, progress)
                    : train_online(load_checkpoint(t_init), *fit_on, cfg, validation, progress);
            if (result.report.skipped_empty_docs > 0)
                note(g, "warning: skipped " + std::to_string(result.report.skipped_empty_docs) +
                            " empty documents");
            for (const auto& p : result.report.passes)
                note(g, "pass " + std::to_string(p.pass) + " held-out perplexity " +
                            format_double(p.perplexity));
            save_checkpoint(result.model, t_out, &vocabs);
            write_output(t_report, [&](std::ostream& o) { result.report.write_tsv(o); });
        } else if (*infer) {
            const auto model = load_checkpoint(i_model);
            const auto vocabs = resolve_vocabs(model, i_model, i_vocab);
            const auto corpus = load_corpus(i_corpus, vocabs);
            const auto table = infer_loadings(model, corpus, {i_tol, i_iters}, g.exec());
            if (!table.empty_docs.empty())
                note(g, "warning: " + std::to_string(table.empty_docs.size()) +
                            " empty documents given uniform loadings");
            export_loadings(table, i_out);
        } else if (*topics) {
            const auto model = load_checkpoint(tp_model);
            const auto vocabs = resolve_vocabs(model, tp_model, tp_vocab);
            const auto report = topic_report(model, vocabs, tp_n);
            if (report.truncated) note(g, "note: --top-n exceeds a vocabulary size; truncated");
            write_output(tp_out, [&](std::ostream& o) { write_topics(report, o); });
        } else if (*perp) {
            const auto model = load_checkpoint(p_model);
            const auto vocabs = resolve_vocabs(model, p_model, p_vocab);
            const auto corpus = load_corpus(p_corpus, vocabs);
            const auto [observed, held] = split_holdout(corpus, p_ratio, g.seed);
            const auto result = held_out_perplexity(model, observed, held, {p_tol, p_iters}, g.exec());
            write_output(p_out, [&](std::ostream& o) { result.write_tsv(o); });
        } else if (*sweep) {
            const auto cfg = w_flags.config(g);
            const auto corpus = load_corpus(w_corpus, load_vocab_dir(w_vocab));
            const auto result = topic_sweep(corpus, w_ks, cfg, w_ratio, g.seed);
            write_output(w_out, [&](std::ostream& o) { result.write_tsv(o); });
            note(g, "best K " + std::to_string(result.best_K));
        } else if (*simil) {
            const auto model = load_checkpoint(m_model);
            const auto vocabs = resolve_vocabs(model, m_model, m_vocab);
            const auto t = category_index(model, m_cat);
            const auto vectors =
                code_topic_vectors(model, t, &vocabs[t], parse_code_vector_mode(m_mode));
            auto sim = similarity_matrix(vectors, g.exec());
            group_codes(sim, m_threshold);
            export_similarity(sim, m_out);
            if (!m_groups.empty()) export_groups(sim, &vocabs[t], m_groups);
        } else if (*coh) {
            const auto model = load_checkpoint(c_model);
            const auto vocabs = resolve_vocabs(model, c_model, c_vocab);
            const auto corpus = load_corpus(c_corpus, vocabs);
            const auto cohorts = load_cohorts(c_cohorts);
            const auto table = infer_loadings(model, corpus, {}, g.exec());
            const auto report = cohort_report(table, cohorts);
            if (!c_loadings.empty()) export_loadings(table, c_loadings);
            write_output(c_out, [&](std::ostream& o) { write_cohort_report(report, o); });
        }
    } catch (const ValidationError& e) {
        std::cerr << "mixehr: error: validation: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "mixehr: error: io: " << one_line(e.what()) << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "mixehr: error: io: " << one_line(e.what()) << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mixehr: error: internal: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
