#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "mixehr/kernels.hpp"
#include "mixehr/synth.hpp"
#include "mixehr/trainer.hpp"

using namespace mixehr;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Fixture {
    MultiCorpus corpus;
    ModelState model;
    std::vector<const Document*> docs;

    Fixture() {
        auto gt = generate_model(4, {25, 15}, 0.2, {0.1, 0.1}, 3);
        corpus = generate_corpus(gt, 300, {20, 10}, 4);
        TrainConfig cfg;
        cfg.K = 4;
        model = init_model(corpus.category_names(), corpus.vocab_sizes(), cfg, corpus.size());
        for (const auto& d : corpus.docs) docs.push_back(&d);
    }
};

}  // namespace

TEST_CASE("deterministic parallel e-step is bitwise equal to the serial reference") {
    Fixture f;
    const auto ex = compute_topic_expectations(f.model);
    const EStepOptions opts;
    const auto serial = estep_batch_serial(f.docs, f.model, ex, opts, true);
    for (int threads : {2, 3, 8}) {
        const auto par = estep_batch_parallel(f.docs, f.model, ex, opts, true, {threads, true});
        REQUIRE(par.posteriors.size() == serial.posteriors.size());
        for (std::size_t d = 0; d < f.docs.size(); ++d)
            CHECK(bitwise_equal(par.posteriors[d].gamma, serial.posteriors[d].gamma));
        for (std::size_t t = 0; t < 2; ++t)
            CHECK(bitwise_equal(par.stats.s[t].data, serial.stats.s[t].data));
        CHECK(std::memcmp(&par.local_elbo, &serial.local_elbo, sizeof(double)) == 0);
        CHECK(par.stats.docs == serial.stats.docs);
    }
}

TEST_CASE("unordered parallel e-step agrees up to summation order") {
    Fixture f;
    const auto ex = compute_topic_expectations(f.model);
    const auto serial = estep_batch_serial(f.docs, f.model, ex, {}, false);
    const auto par = estep_batch_parallel(f.docs, f.model, ex, {}, false, {4, false});
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t j = 0; j < serial.stats.s[t].data.size(); ++j)
            CHECK(std::abs(par.stats.s[t].data[j] - serial.stats.s[t].data[j]) <
                  1e-9 * (1 + std::abs(serial.stats.s[t].data[j])));
    for (std::size_t d = 0; d < f.docs.size(); ++d)
        CHECK(bitwise_equal(par.posteriors[d].gamma, serial.posteriors[d].gamma));
}

TEST_CASE("batch statistics equal the sum of per-document contributions") {
    Fixture f;
    const auto ex = compute_topic_expectations(f.model);
    const auto batch = estep_batch_serial(f.docs, f.model, ex, {}, false);
    auto stats = SuffStats::zeros(f.model);
    for (const auto* d : f.docs) stats.add(*d, e_step_document(*d, f.model, ex).phi);
    for (std::size_t t = 0; t < 2; ++t) CHECK(stats.s[t] == batch.stats.s[t]);
    CHECK(stats.docs == f.docs.size());
}

TEST_CASE("parallel errors surface as exceptions") {
    Fixture f;
    Document bad{"bad", {{{999, 1}}, {}}};
    f.docs.push_back(&bad);
    const auto ex = compute_topic_expectations(f.model);
    CHECK_THROWS(estep_batch_parallel(f.docs, f.model, ex, {}, false, {4, true}));
    CHECK_THROWS(estep_batch_parallel(f.docs, f.model, ex, {}, false, {4, false}));
}

TEST_CASE("parallel cosine similarity equals the serial reference") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix v(57, 6);
    for (double& x : v.data) x = u(rng);
    const auto s = cosine_similarity_serial(v);
    const auto p = cosine_similarity_parallel(v, {4, true});
    CHECK(bitwise_equal(s.data, p.data));
    for (std::size_t i = 0; i < v.rows; ++i) {
        CHECK(s(i, i) == 1.0);
        for (std::size_t j = 0; j < v.rows; ++j) CHECK(s(i, j) == s(j, i));
    }
}
