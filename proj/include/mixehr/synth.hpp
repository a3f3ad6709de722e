#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixehr/corpus.hpp"
#include "mixehr/matrix.hpp"

namespace mixehr {

struct SynonymPair {
    std::size_t category;
    TokenId a;
    TokenId b;

    friend bool operator==(const SynonymPair&, const SynonymPair&) = default;
};

// Every parameter that went into a synthetic corpus; persisted as config.json.
struct SynthConfig {
    std::size_t K = 0;
    std::vector<std::string> categories;
    std::vector<std::size_t> vocab_sizes;
    double alpha = 0.1;
    std::vector<double> eta;
    std::uint64_t model_seed = 0;

    std::size_t D = 0;
    std::vector<std::size_t> doc_len;  // per category; mean when poisson_lengths
    bool poisson_lengths = false;
    std::uint64_t corpus_seed = 0;

    std::size_t synonym_category = 0;
    std::size_t synonym_pairs = 0;
    double synonym_epsilon = 0.0;
    std::uint64_t synonym_seed = 0;

    std::vector<std::pair<std::string, std::size_t>> cohort_topics;
    std::size_t cohort_size = 0;
    double cohort_boost = 0.0;
    std::uint64_t cohort_seed = 0;
};

struct SynthGroundTruth {
    SynthConfig config;
    std::vector<Matrix> beta;  // [t] is K x V_t, rows on the simplex
    Matrix theta;              // D x K, rows on the simplex
    std::vector<SynonymPair> synonyms;
    std::vector<CohortAssignment> cohorts;
    std::vector<std::string> empty_docs;
};

// Default category names: dx, rx, px, lab, then cat4, cat5, ...
std::vector<std::string> default_category_names(std::size_t T);

// Codes named "<CAT>_00042" with a generated description.
std::vector<Vocabulary> synthetic_vocabs(const std::vector<std::string>& names,
                                         const std::vector<std::size_t>& sizes);

// Dirichlet draw computed in log space so that small concentrations never
// produce an all-zero vector.
std::vector<double> sample_dirichlet(std::mt19937_64& rng, std::span<const double> concentration);
std::vector<double> sample_symmetric_dirichlet(std::mt19937_64& rng, std::size_t n, double a);

// beta^t_k ~ Dirichlet(eta_t) for every topic and category. K must be >= 2.
SynthGroundTruth generate_model(std::size_t K, const std::vector<std::size_t>& vocab_sizes,
                                double alpha, const std::vector<double>& eta, std::uint64_t seed,
                                std::vector<std::string> category_names = {});

// theta_d ~ Dirichlet(alpha); each token slot draws z ~ Mult(theta_d) then
// w ~ Mult(beta^t_z). Fills gt.theta and returns the corpus.
MultiCorpus generate_corpus(SynthGroundTruth& gt, std::size_t D,
                            const std::vector<std::size_t>& doc_len, std::uint64_t seed,
                            bool poisson_lengths = false);

// Makes token b's topic column a noisy copy of token a's for n random pairs
// in one category, then renormalises every topic row.
void plant_synonyms(SynthGroundTruth& gt, std::size_t category, std::size_t n_pairs,
                    double epsilon, std::uint64_t seed);

// Redraws theta_d = boost e_k + (1 - boost) Dirichlet(alpha) for `cohort_size`
// random documents per cohort and regenerates their tokens with the same
// per-category lengths. Returns the labels (also stored in gt.cohorts).
std::vector<CohortAssignment> plant_cohorts(
    SynthGroundTruth& gt, MultiCorpus& corpus,
    const std::vector<std::pair<std::string, std::size_t>>& cohort_topics,
    std::size_t cohort_size, double boost, std::uint64_t seed);

// Bundle directory: config.json, theta.bin, beta_<cat>.bin, synonyms.tsv,
// cohorts.tsv, corpus.jsonl and the vocabulary files.
void save_bundle(const std::filesystem::path& dir, const SynthGroundTruth& gt,
                 const MultiCorpus& corpus);
SynthGroundTruth load_ground_truth(const std::filesystem::path& dir);

}  // namespace mixehr
