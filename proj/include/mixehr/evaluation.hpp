#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mixehr/corpus.hpp"
#include "mixehr/inference.hpp"
#include "mixehr/kernels.hpp"
#include "mixehr/trainer.hpp"

namespace mixehr {

struct PerplexityResult {
    std::vector<std::string> categories;
    std::vector<std::uint64_t> held_tokens;
    std::vector<double> log_likelihood;  // summed over held tokens
    std::vector<double> perplexity;      // NaN for a category without held tokens
    std::uint64_t total_held_tokens = 0;
    double combined = 0.0;
    std::size_t docs_evaluated = 0;
    std::size_t docs_without_observed = 0;  // scored with uniform loadings

    // category<TAB>held_tokens<TAB>perplexity, final row COMBINED
    void write_tsv(std::ostream& out) const;
};

// Document completion: theta is fit on `observed`, each held token is scored
// with p(w | d, t) = sum_k theta_dk beta_kw. A document whose observed half
// is empty is scored with uniform loadings 1/K.
PerplexityResult held_out_perplexity(const ModelState& model, const MultiCorpus& observed,
                                     const MultiCorpus& held, const EStepOptions& opts = {},
                                     const ExecPolicy& exec = {});

struct SweepRow {
    std::size_t K;
    double perplexity;
    double train_seconds;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::size_t best_K = 0;

    // K<TAB>perplexity<TAB>train_seconds
    void write_tsv(std::ostream& out) const;
};

// Trains one model per K on the observed split and scores the held split.
SweepResult topic_sweep(const MultiCorpus& corpus, const std::vector<std::size_t>& Ks,
                        const TrainConfig& base, double ratio, std::uint64_t seed);

}  // namespace mixehr
