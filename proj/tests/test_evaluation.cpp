#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mixehr/error.hpp"
#include "mixehr/evaluation.hpp"
#include "mixehr/synth.hpp"

using namespace mixehr;

namespace {

struct Split {
    MultiCorpus corpus, observed, held;
};

Split make_split(std::uint64_t seed, std::vector<std::size_t> sizes = {20, 12, 8},
                 std::size_t D = 150) {
    Split s;
    auto gt = generate_model(3, sizes, 0.2, std::vector<double>(sizes.size(), 0.1), seed);
    s.corpus = generate_corpus(gt, D, std::vector<std::size_t>(sizes.size(), 12), seed + 1);
    std::tie(s.observed, s.held) = split_holdout(s.corpus, 0.3, seed + 2);
    return s;
}

ModelState uniform_model(const MultiCorpus& c, std::size_t K, double value = 2.5) {
    ModelState m;
    m.K = K;
    m.category_names = c.category_names();
    for (auto V : c.vocab_sizes()) m.lambda.emplace_back(K, V, value);
    m.eta.assign(c.num_categories(), 0.01);
    m.alpha = 1.0 / K;
    return m;
}

}  // namespace

TEST_CASE("uniform topics give perplexity equal to vocabulary size") {
    const auto s = make_split(70);
    const auto r = held_out_perplexity(uniform_model(s.corpus, 4), s.observed, s.held);
    const auto sizes = s.corpus.vocab_sizes();
    for (std::size_t t = 0; t < sizes.size(); ++t)
        CHECK(std::abs(r.perplexity[t] - static_cast<double>(sizes[t])) < 1e-9);
    CHECK(r.docs_evaluated > 0);
    CHECK(r.total_held_tokens == r.held_tokens[0] + r.held_tokens[1] + r.held_tokens[2]);
}

TEST_CASE("combined perplexity is the token-weighted mean of the logs") {
    const auto s = make_split(71);
    TrainConfig cfg;
    cfg.K = 3;
    cfg.batch_size = 50;
    const auto model = train_online(s.observed, cfg).model;
    const auto r = held_out_perplexity(model, s.observed, s.held);
    double weighted = 0;
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(r.perplexity[t] >= 1.0);
        weighted += r.held_tokens[t] * std::log(r.perplexity[t]);
    }
    CHECK(std::abs(weighted / r.total_held_tokens - std::log(r.combined)) < 1e-12);
}

TEST_CASE("a one-code category has perplexity one") {
    auto s = make_split(72, {20, 1});
    const auto r = held_out_perplexity(uniform_model(s.corpus, 3), s.observed, s.held);
    CHECK(std::abs(r.perplexity[1] - 1.0) < 1e-12);
    CHECK(r.combined <= r.perplexity[0]);
}

TEST_CASE("perplexity does not depend on topic order") {
    const auto s = make_split(73);
    TrainConfig cfg;
    cfg.K = 3;
    cfg.batch_size = 50;
    const auto model = train_online(s.observed, cfg).model;
    auto permuted = model;
    const std::size_t perm[] = {2, 0, 1};
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t k = 0; k < 3; ++k) {
            const auto src = model.lambda[t].row(perm[k]);
            std::copy(src.begin(), src.end(), permuted.lambda[t].row(k).begin());
        }
    const EStepOptions tight{1e-12, 1000};
    const auto a = held_out_perplexity(model, s.observed, s.held, tight);
    const auto b = held_out_perplexity(permuted, s.observed, s.held, tight);
    CHECK(std::abs(a.combined - b.combined) < 1e-9 * a.combined);
}

TEST_CASE("documents without observed tokens use uniform loadings") {
    auto s = make_split(74);
    for (auto& cat : s.observed.docs[0].cats) cat.clear();
    const auto r = held_out_perplexity(uniform_model(s.corpus, 3), s.observed, s.held);
    CHECK(r.docs_without_observed == 1);
}

TEST_CASE("a category with no held tokens reports NaN") {
    auto s = make_split(75);
    for (auto& d : s.held.docs) d.cats[2].clear();
    const auto r = held_out_perplexity(uniform_model(s.corpus, 3), s.observed, s.held);
    CHECK(std::isnan(r.perplexity[2]));
    CHECK(std::isfinite(r.combined));
    std::ostringstream out;
    r.write_tsv(out);
    CHECK(out.str().find("\npx\t0\tnan\n") != std::string::npos);
    CHECK(out.str().rfind("category\theld_tokens\tperplexity\n", 0) == 0);
    CHECK(out.str().find("\nCOMBINED\t") != std::string::npos);
}

TEST_CASE("misaligned halves are rejected") {
    auto s = make_split(76);
    std::swap(s.held.docs[3], s.held.docs[4]);
    CHECK_THROWS_AS(held_out_perplexity(uniform_model(s.corpus, 3), s.observed, s.held),
                    ValidationError);
    s.held.docs.pop_back();
    CHECK_THROWS_AS(held_out_perplexity(uniform_model(s.corpus, 3), s.observed, s.held),
                    ValidationError);
}

TEST_CASE("parallel perplexity equals the serial value") {
    const auto s = make_split(77);
    const auto m = uniform_model(s.corpus, 3, 1.0);
    auto noisy = m;
    for (auto& lam : noisy.lambda)
        for (std::size_t j = 0; j < lam.data.size(); ++j) lam.data[j] += 0.1 * (j % 7);
    const auto a = held_out_perplexity(noisy, s.observed, s.held, {}, {1, true});
    const auto b = held_out_perplexity(noisy, s.observed, s.held, {}, {4, true});
    CHECK(a.combined == b.combined);
    CHECK(a.perplexity == b.perplexity);
}

TEST_CASE("topic sweep") {
    auto gt = generate_model(3, {20, 12}, 0.2, {0.1, 0.1}, 80);
    const auto corpus = generate_corpus(gt, 200, {12, 8}, 81);
    TrainConfig base;
    base.batch_size = 64;
    base.passes = 2;
    base.seed = 3;
    const auto one = topic_sweep(corpus, {3}, base, 0.3, 5);
    REQUIRE(one.rows.size() == 1);
    CHECK(one.best_K == 3);
    CHECK(one.rows[0].perplexity > 1.0);

    const auto a = topic_sweep(corpus, {2, 4}, base, 0.3, 5);
    const auto b = topic_sweep(corpus, {2, 4}, base, 0.3, 5);
    REQUIRE(a.rows.size() == 2);
    CHECK(a.rows[0].perplexity == b.rows[0].perplexity);
    CHECK(a.rows[1].perplexity == b.rows[1].perplexity);
    CHECK(a.best_K == (a.rows[0].perplexity <= a.rows[1].perplexity ? 2u : 4u));

    std::ostringstream out;
    a.write_tsv(out);
    CHECK(out.str().rfind("K\tperplexity\ttrain_seconds\n2\t", 0) == 0);

    CHECK_THROWS_AS(topic_sweep(corpus, {}, base, 0.3, 5), ValidationError);
}
