#pragma once

#include <span>
#include <vector>

#include "mixehr/inference.hpp"

namespace mixehr {

// Parallelism budget handed down from the CLI. With `deterministic` set,
// every parallel kernel reduces in document order and is bitwise equal to
// its serial reference for any thread count.
struct ExecPolicy {
    int threads = 1;
    bool deterministic = true;
};

struct BatchEStep {
    std::vector<DocPosterior> posteriors;  // one per input document
    SuffStats stats;
    double local_elbo = 0.0;  // unscaled sum of per-document ELBO terms
};

// Serial reference: documents processed and reduced strictly in order.
BatchEStep estep_batch_serial(std::span<const Document* const> docs, const ModelState& model,
                              const TopicExpectations& ex, const EStepOptions& opts,
                              bool with_elbo);

// OpenMP version. Deterministic mode keeps per-document phi and reduces in
// order; otherwise each thread accumulates into its own dense statistics.
BatchEStep estep_batch_parallel(std::span<const Document* const> docs, const ModelState& model,
                                const TopicExpectations& ex, const EStepOptions& opts,
                                bool with_elbo, const ExecPolicy& exec);

BatchEStep estep_batch(std::span<const Document* const> docs, const ModelState& model,
                       const TopicExpectations& ex, const EStepOptions& opts, bool with_elbo,
                       const ExecPolicy& exec);

// Pairwise cosine similarity between rows of `vectors` (n x K).
Matrix cosine_similarity_serial(const Matrix& vectors);
Matrix cosine_similarity_parallel(const Matrix& vectors, const ExecPolicy& exec);

}  // namespace mixehr
