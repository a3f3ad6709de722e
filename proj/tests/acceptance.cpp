// Acceptance harness: one PASS/FAIL line per criterion.

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "mixehr/analysis.hpp"
#include "mixehr/evaluation.hpp"
#include "mixehr/matching.hpp"
#include "mixehr/special.hpp"
#include "mixehr/synth.hpp"
#include "mixehr/trainer.hpp"
#include "oracles.hpp"

using namespace mixehr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// The recovery corpus: K=5, T=3, V=(50,30,40), D=2000, 50 tokens per
// category, alpha=0.1, eta=0.05, seed 7. Written to disk and read back so
// every criterion trains on the persisted bundle.
struct RecoveryData {
    testing::TempDir dir{"acceptance"};
    SynthGroundTruth truth;
    MultiCorpus corpus;

    RecoveryData() {
        auto gt = generate_model(5, {50, 30, 40}, 0.1, {0.05, 0.05, 0.05}, 7);
        auto c = generate_corpus(gt, 2000, {50}, 7);
        save_bundle(dir / "data", gt, c);
        truth = load_ground_truth(dir / "data");
        corpus = load_corpus(dir / "data" / "corpus.jsonl", load_vocab_dir(dir / "data"));
    }
};

TrainConfig recovery_config() {
    TrainConfig cfg;
    cfg.K = 5;
    cfg.batch_size = 256;
    cfg.passes = 5;
    cfg.seed = 7;
    cfg.exec = {1, true};
    return cfg;
}

std::vector<Matrix> expected_betas(const ModelState& m) {
    std::vector<Matrix> out;
    for (std::size_t t = 0; t < m.num_categories(); ++t) out.push_back(expected_beta(m, t));
    return out;
}

std::vector<Matrix> normalise_rows(std::vector<Matrix> ms) {
    for (auto& m : ms)
        for (std::size_t k = 0; k < m.rows; ++k) {
            auto r = m.row(k);
            const double s = std::accumulate(r.begin(), r.end(), 0.0);
            for (double& x : r) x /= s;
        }
    return ms;
}

double mean_matched_tv(const std::vector<Matrix>& learned, const std::vector<Matrix>& truth) {
    const auto match = match_topics(learned, truth);
    double tv = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < truth.size(); ++t)
        for (std::size_t k = 0; k < truth[t].rows; ++k, ++n)
            tv += total_variation(learned[t].row(match[k]), truth[t].row(k));
    return tv / static_cast<double>(n);
}

std::vector<TokenId> top_ids(std::span<const double> row, std::size_t n) {
    std::vector<TokenId> ids(row.size());
    std::iota(ids.begin(), ids.end(), TokenId{0});
    std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return row[a] > row[b]; });
    ids.resize(n);
    return ids;
}

// ---------------------------------------------------------------------------

Outcome topic_recovery(const RecoveryData& data) {
    const auto cfg = recovery_config();
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train_online(data.corpus, cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto learned = expected_betas(result.model);
    const double tv = mean_matched_tv(learned, data.truth.beta);

    // Top-5 code overlap per matched (topic, category).
    const auto report = topic_report(result.model, data.corpus.vocabs, 5);
    const auto match = match_topics(learned, data.truth.beta);
    std::size_t worst_overlap = 5;
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t k = 0; k < 5; ++k) {
            const auto truth_top = top_ids(data.truth.beta[t].row(k), 5);
            std::size_t overlap = 0;
            for (const auto& e : report.topics[match[k]][t])
                overlap += std::count(truth_top.begin(), truth_top.end(), e.id);
            worst_overlap = std::min(worst_overlap, overlap);
        }

    // Calibration: full-batch VB from the same starting point.
    const auto init = init_model(data.corpus.category_names(), data.corpus.vocab_sizes(), cfg,
                                 data.corpus.size());
    const auto vb = oracle::batch_vb(data.corpus, init.lambda, init.alpha, init.eta, 20);
    const double vb_tv = mean_matched_tv(normalise_rows(vb), data.truth.beta);

    return {tv < 0.10 && secs < 60.0,
            fmt("mean TV %.4f (< 0.10), batch-VB reference %.4f, worst top-5 overlap %zu/5, "
                "%.2f s",
                tv, vb_tv, worst_overlap, secs)};
}

Outcome oracle_equivalence() {
    std::mt19937_64 rng(2);
    std::gamma_distribution<double> lam_noise(0.5, 2.0);
    std::uniform_int_distribution<std::uint32_t> count(1, 8);
    std::uniform_int_distribution<std::size_t> pick_K(2, 8), pick_V(3, 40);
    std::bernoulli_distribution keep(0.3);
    double worst_gamma = 0;
    for (int i = 0; i < 50; ++i) {
        ModelState m;
        m.K = pick_K(rng);
        const std::size_t V = pick_V(rng);
        m.category_names = {"dx"};
        m.eta = {0.01};
        m.alpha = 1.0 / static_cast<double>(m.K);
        Matrix lam(m.K, V);
        for (double& x : lam.data) x = 0.01 + lam_noise(rng);
        m.lambda = {lam};
        Document doc{"d", {{}}};
        for (std::size_t w = 0; w < V; ++w)
            if (keep(rng)) doc.cats[0].push_back({static_cast<TokenId>(w), count(rng)});
        if (doc.empty()) doc.cats[0].push_back({0, 1});

        const EStepOptions opts;
        const auto r = e_step_document(doc, m, opts);
        const auto o = oracle::brute_force_estep(oracle::densify(doc, {V}), m.lambda, m.alpha, 1.0,
                                                 opts.tol, opts.max_iters);
        for (std::size_t k = 0; k < m.K; ++k)
            worst_gamma = std::max(
                worst_gamma, std::abs(r.posterior.gamma[k] - static_cast<double>(o.gamma[k])));
    }

    // One online step with batch_size = D and rho = 1 against a batch M-step
    // computed from the same E-step outputs.
    auto gt = generate_model(4, {25, 15}, 0.2, {0.1, 0.1}, 3);
    const auto corpus = generate_corpus(gt, 120, {20, 10}, 4);
    TrainConfig cfg;
    cfg.K = 4;
    cfg.batch_size = corpus.size();
    cfg.passes = 1;
    cfg.fixed_rho = 1.0;
    cfg.seed = 11;
    const auto online = train_online(corpus, cfg).model;

    const auto init =
        init_model(corpus.category_names(), corpus.vocab_sizes(), cfg, corpus.size());
    const auto ex = compute_topic_expectations(init);
    std::vector<std::vector<double>> s;
    for (auto V : corpus.vocab_sizes()) s.emplace_back(cfg.K * V, 0.0);
    for (std::size_t d : pass_order(corpus.size(), cfg.seed, 0)) {
        const auto& doc = corpus.docs[d];
        const auto r = e_step_document(doc, init, ex, {cfg.tol, cfg.max_iters});
        for (std::size_t t = 0; t < doc.cats.size(); ++t)
            for (std::size_t i = 0; i < doc.cats[t].size(); ++i)
                for (std::size_t k = 0; k < cfg.K; ++k)
                    s[t][k * init.lambda[t].cols + doc.cats[t][i].id] +=
                        doc.cats[t][i].count * r.phi.at(t, i)[k];
    }
    double worst_mstep = 0;
    for (std::size_t t = 0; t < s.size(); ++t)
        for (std::size_t j = 0; j < s[t].size(); ++j) {
            const double batch = init.eta[t] + s[t][j];
            worst_mstep = std::max(worst_mstep, std::abs(online.lambda[t].data[j] - batch));
        }
    return {worst_gamma < 1e-8 && worst_mstep < 1e-12,
            fmt("max |gamma - oracle| %.2e (< 1e-8) over 50 docs, max |lambda - batch| %.2e "
                "(< 1e-12)",
                worst_gamma, worst_mstep)};
}

Outcome perplexity_sanity(const RecoveryData& data) {
    const auto [observed, held] = split_holdout(data.corpus, 0.2, 17);
    auto cfg = recovery_config();
    const auto trained = train_online(observed, cfg, {&observed, &held});
    const auto random =
        init_model(observed.category_names(), observed.vocab_sizes(), cfg, observed.size());
    const double p_trained = held_out_perplexity(trained.model, observed, held).combined;
    const double p_random = held_out_perplexity(random, observed, held).combined;

    auto uniform = random;
    for (auto& lam : uniform.lambda) std::fill(lam.data.begin(), lam.data.end(), 3.0);
    const auto pu = held_out_perplexity(uniform, observed, held);
    double worst_uniform = 0;
    for (std::size_t t = 0; t < pu.perplexity.size(); ++t)
        worst_uniform = std::max(worst_uniform, std::abs(pu.perplexity[t] -
                                                         static_cast<double>(observed.vocabs[t].size())));

    const auto& passes = trained.report.passes;
    const bool ok = p_trained < p_random && worst_uniform < 1e-9 && passes.size() == 5 &&
                    passes[2].perplexity <= passes[0].perplexity;
    return {ok, fmt("trained %.4f < random %.4f, uniform |ppl - V_t| %.1e, pass1 %.4f >= pass3 "
                    "%.4f",
                    p_trained, p_random, worst_uniform, passes[0].perplexity,
                    passes[2].perplexity)};
}

Outcome averaged_gamma() {
    const double alpha = 0.1, n = 8;
    double worst = 0;
    const auto model = [&](std::vector<Matrix> lam) {
        ModelState m;
        m.K = lam.front().rows;
        for (std::size_t t = 0; t < lam.size(); ++t) m.category_names.push_back("c" + std::to_string(t));
        m.eta.assign(lam.size(), 0.01);
        m.lambda = std::move(lam);
        m.alpha = alpha;
        return m;
    };
    {
        const auto r = e_step_document(Document{"a", {{{1, 8}}}}, model({Matrix(1, 3, 0.4)}));
        worst = std::max(worst, std::abs(r.posterior.gamma[0] - (alpha + n)));
    }
    Matrix same(2, 4);
    for (std::size_t w = 0; w < 4; ++w) same(0, w) = same(1, w) = 0.5 + w;
    {
        const auto r = e_step_document(Document{"b", {{{2, 8}}}}, model({same}));
        for (double g : r.posterior.gamma) worst = std::max(worst, std::abs(g - (alpha + n / 2)));
        for (double p : r.phi.at(0, 0)) worst = std::max(worst, std::abs(p - 0.5));
    }
    {
        const auto r = e_step_document(Document{"c", {{{0, 8}}, {{3, 8}}}}, model({same, same}));
        // alpha + (1/2) (n/2 + n/2)
        for (double g : r.posterior.gamma) worst = std::max(worst, std::abs(g - (alpha + n / 2)));
    }
    return {worst < 1e-12, fmt("max deviation %.1e (< 1e-12)", worst)};
}

Outcome synonym_grouping() {
    // One 200-code category with 10 topics; eta = 1 keeps code columns
    // diffuse so unrelated codes are not near-parallel. A second category
    // carries extra signal for the topic proportions.
    auto gt = generate_model(10, {200, 60}, 0.1, {1.0, 0.05}, 41);
    plant_synonyms(gt, 0, 10, 0.05, 42);
    ModelState truth;
    truth.K = 10;
    truth.category_names = gt.config.categories;
    truth.lambda = gt.beta;
    truth.eta = gt.config.eta;
    truth.alpha = gt.config.alpha;

    auto sim = similarity_matrix(code_topic_vectors(truth, 0));
    group_codes(sim, 0.95);

    std::vector<std::size_t> planted, found;
    double min_pair = 1.0;
    for (std::size_t p = 0; p < gt.synonyms.size(); ++p) {
        const auto& s = gt.synonyms[p];
        for (TokenId id : {s.a, s.b}) {
            planted.push_back(p);
            found.push_back(sim.group_labels[id]);
        }
        min_pair = std::min(min_pair, sim.S(s.a, s.b));
    }
    double max_other = 0;
    for (std::size_t i = 0; i < sim.ids.size(); ++i)
        for (std::size_t j = i + 1; j < sim.ids.size(); ++j) {
            bool pair = false;
            for (const auto& s : gt.synonyms)
                pair |= (s.a == i && s.b == j) || (s.a == j && s.b == i);
            if (!pair) max_other = std::max(max_other, sim.S(i, j));
        }
    const double ari = adjusted_rand_index(planted, found);
    return {ari > 0.9, fmt("ARI %.4f (> 0.9), min pair cosine %.4f, max non-pair cosine %.4f",
                           ari, min_pair, max_other)};
}

Outcome cohort_separation(const RecoveryData& data) {
    auto gt = data.truth;
    auto corpus = data.corpus;
    const std::vector<std::pair<std::string, std::size_t>> planted{
        {"cohort0", 0}, {"cohort1", 1}, {"cohort2", 2}};
    const auto labels = plant_cohorts(gt, corpus, planted, 100, 0.8, 7);

    const auto model = train_online(corpus, recovery_config()).model;
    const auto match = match_topics(expected_betas(model), gt.beta);
    const auto report = cohort_report(infer_loadings(model, corpus), labels);

    bool ok = report.cohorts.size() == 3;
    std::set<std::size_t> dominant;
    std::string detail;
    for (std::size_t c = 0; ok && c < 3; ++c) {
        const auto& s = report.cohorts[c];
        const auto want = match[planted[c].second];
        dominant.insert(s.dominant_topic);
        ok &= s.cohort == planted[c].first && s.dominant_topic == want;
        double best_other = 0;
        for (std::size_t k = 0; k < model.K; ++k)
            if (k != want) best_other = std::max(best_other, s.topics[k].mean);
        ok &= s.topics[want].mean > best_other;
        detail += fmt("%s->%zu (want %zu, median %.3f) ", s.cohort.c_str(), s.dominant_topic, want,
                      s.topics[want].median);
    }
    ok &= dominant.size() == 3;
    return {ok, detail + (dominant.size() == 3 ? "distinct" : "not distinct")};
}

Outcome invariant_suites() {
    doctest::Context ctx;
    ctx.setOption("test-case", "property:*");
    ctx.setOption("no-version", true);
    std::ostringstream sink;
    ctx.setCout(&sink);
    const int failed = ctx.run();
    std::size_t suites = 0;
    const auto text = sink.str();
    const auto pos = text.find("test cases:");
    if (pos != std::string::npos) std::sscanf(text.c_str() + pos, "test cases: %zu", &suites);
    return {failed == 0 && suites >= 9,
            fmt("%zu property suites x 250 random cases, %s", suites,
                failed == 0 ? "all hold" : "failures (run mixehr_tests -tc='property:*')")};
}

Outcome determinism_and_persistence(const RecoveryData& data) {
    testing::TempDir dir("determinism");
    auto cfg = recovery_config();
    cfg.passes = 2;
    const auto a = train_online(data.corpus, cfg).model;
    const auto b = train_online(data.corpus, cfg).model;
    cfg.exec = {4, true};
    const auto c = train_online(data.corpus, cfg).model;
    save_checkpoint(a, dir / "a");
    save_checkpoint(b, dir / "b");
    save_checkpoint(c, dir / "c");
    save_checkpoint(load_checkpoint(dir / "a"), dir / "a2");

    bool same_runs = true, round_trip = true;
    for (const auto& f : fs::directory_iterator(dir / "a")) {
        const auto name = f.path().filename();
        const auto bytes = testing::slurp(f.path());
        same_runs &= bytes == testing::slurp(dir / "b" / name) &&
                     bytes == testing::slurp(dir / "c" / name);
        round_trip &= bytes == testing::slurp(dir / "a2" / name);
    }

    double worst = 0, worst_x = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double x = std::exp(std::log(1e-4) + (std::log(1e4) - std::log(1e-4)) * (i + 0.5) / n);
        const double err = std::abs(digamma(x) - static_cast<double>(oracle::digamma(x)));
        if (err > worst) {
            worst = err;
            worst_x = x;
        }
    }
    return {same_runs && round_trip && worst <= 1e-10,
            fmt("identical checkpoints across runs and 1/4 threads: %s, save-load-save identical: "
                "%s, digamma max error %.2e at x=%.4g (<= 1e-10)",
                same_runs ? "yes" : "no", round_trip ? "yes" : "no", worst, worst_x)};
}

}  // namespace

int main() {
    const RecoveryData data;
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"1 synthetic topic recovery", [&] { return topic_recovery(data); }},
        {"2 oracle equivalence", oracle_equivalence},
        {"3 perplexity sanity", [&] { return perplexity_sanity(data); }},
        {"4 averaged gamma update", averaged_gamma},
        {"5 synonym grouping", synonym_grouping},
        {"6 cohort separation", [&] { return cohort_separation(data); }},
        {"7 invariant suites", invariant_suites},
        {"8 determinism and persistence", [&] { return determinism_and_persistence(data); }},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
