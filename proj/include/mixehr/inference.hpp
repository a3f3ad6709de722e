#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixehr/corpus.hpp"
#include "mixehr/matrix.hpp"

namespace mixehr {

// How the per-document topic update combines the T categories.
//   AllCategories:     gamma = alpha + (1/T) * sum_t sum_w n * phi, T = declared categories
//   PresentCategories: same, dividing by the number of nonempty categories
enum class GammaAveraging { AllCategories, PresentCategories };

std::string to_string(GammaAveraging g);
GammaAveraging parse_gamma_averaging(const std::string& s);

// Global variational state: one K x V_t Dirichlet parameter matrix per
// category plus the hyperparameters and learning-rate schedule position.
struct ModelState {
    std::size_t K = 0;
    std::vector<std::string> category_names;
    std::vector<Matrix> lambda;
    double alpha = 0.0;
    std::vector<double> eta;
    double tau0 = 256.0;
    double kappa = 0.7;
    std::uint64_t step = 0;
    std::uint64_t D_total = 1;
    std::uint64_t seed = 0;
    GammaAveraging gamma_avg = GammaAveraging::AllCategories;

    std::size_t num_categories() const { return lambda.size(); }
    std::vector<std::size_t> vocab_sizes() const;

    // Throws ValidationError if shapes, positivity or hyperparameters are off.
    void validate() const;
};

// Row-normalised lambda^t: the expected topic-word distributions.
Matrix expected_beta(const ModelState& model, std::size_t t);

// Per-minibatch snapshot of E[log beta^t_kw], stored word-major (V_t x K) so
// that the E-step reads one contiguous K-vector per token.
struct TopicExpectations {
    std::vector<Matrix> elog_beta;  // [t] is V_t x K
};

TopicExpectations compute_topic_expectations(const ModelState& model);

struct DocPosterior {
    std::vector<double> gamma;
    std::vector<double> loadings;
    int n_iters = 0;
    bool converged = false;
};

// phi[t] holds one K-vector per entry of doc.cats[t], in document order.
struct PhiSlice {
    std::size_t K = 0;
    std::vector<std::vector<double>> phi;

    std::span<const double> at(std::size_t t, std::size_t i) const {
        return {phi[t].data() + i * K, K};
    }
};

struct EStepOptions {
    double tol = 1e-3;
    int max_iters = 100;
};

struct EStepResult {
    DocPosterior posterior;
    PhiSlice phi;
};

// Coordinate ascent on (phi, gamma) for one document against a fixed model.
// gamma starts at alpha + N_d / (T K) unless `gamma_init` is given. The
// returned gamma is the update computed from the returned phi. Throws
// ValidationError on shape mismatch or an all-empty document.
EStepResult e_step_document(const Document& doc, const ModelState& model,
                            const TopicExpectations& expectations, const EStepOptions& opts = {},
                            std::span<const double> gamma_init = {});
EStepResult e_step_document(const Document& doc, const ModelState& model,
                            const EStepOptions& opts = {});

// Dense per-category sufficient statistics s^t_kw = sum_d n^t_dw phi^t_dwk.
struct SuffStats {
    std::vector<Matrix> s;  // [t] is K x V_t
    std::size_t docs = 0;

    static SuffStats zeros(const ModelState& model);
    void add(const Document& doc, const PhiSlice& phi);
};

// Decomposition of the evidence lower bound.
struct ElboTerms {
    double token_likelihood = 0.0;  // E[log p(w | z, beta)]
    double assignment = 0.0;        // E[log p(z | theta)] - E[log q(z)]
    double theta = 0.0;             // E[log p(theta | alpha)] - E[log q(theta)]
    double beta = 0.0;              // E[log p(beta | eta)] - E[log q(beta)]

    double local() const { return token_likelihood + assignment + theta; }
    double total() const { return local() + beta; }
};

// Per-document terms (everything except beta).
ElboTerms elbo_document(const Document& doc, const EStepResult& result, const ModelState& model,
                        const TopicExpectations& expectations);

// Global beta prior/entropy term, counted once per corpus.
double elbo_beta_term(const ModelState& model, const TopicExpectations& expectations);

// Minibatch estimate: per-document terms scaled by D_total / |batch| plus the
// beta term. Throws ValidationError naming the first non-finite term.
double elbo_minibatch(std::span<const Document* const> docs, std::span<const EStepResult> results,
                      const ModelState& model, const TopicExpectations& expectations);

}  // namespace mixehr
