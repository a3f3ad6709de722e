#include "mixehr/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>

#include "mixehr/error.hpp"

namespace mixehr {

void PerplexityResult::write_tsv(std::ostream& out) const {
    out << "category\theld_tokens\tperplexity\n" << std::setprecision(17);
    for (std::size_t t = 0; t < categories.size(); ++t)
        out << categories[t] << '\t' << held_tokens[t] << '\t' << perplexity[t] << '\n';
    out << "COMBINED\t" << total_held_tokens << '\t' << combined << '\n';
}

void SweepResult::write_tsv(std::ostream& out) const {
    out << "K\tperplexity\ttrain_seconds\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.K << '\t' << r.perplexity << '\t' << r.train_seconds << '\n';
}

PerplexityResult held_out_perplexity(const ModelState& model, const MultiCorpus& observed,
                                     const MultiCorpus& held, const EStepOptions& opts,
                                     const ExecPolicy& exec) {
    model.validate();
    if (observed.size() != held.size())
        throw ValidationError("observed and held corpora differ in document count");
    if (observed.vocab_sizes() != model.vocab_sizes() || held.vocab_sizes() != model.vocab_sizes())
        throw ValidationError("corpus vocabularies do not match the model's shapes");
    for (std::size_t d = 0; d < observed.size(); ++d)
        if (observed.docs[d].id != held.docs[d].id)
            throw ValidationError("misaligned document ids at position " + std::to_string(d) +
                                  ": '" + observed.docs[d].id + "' vs '" + held.docs[d].id + "'");

    const std::size_t K = model.K;
    const std::size_t T = model.num_categories();
    // Word-major expected topics so that each token reads one K-vector.
    std::vector<Matrix> beta_wk;
    for (std::size_t t = 0; t < T; ++t) {
        const auto b = expected_beta(model, t);
        Matrix tr(b.cols, b.rows);
        for (std::size_t k = 0; k < b.rows; ++k)
            for (std::size_t w = 0; w < b.cols; ++w) tr(w, k) = b(k, w);
        beta_wk.push_back(std::move(tr));
    }
    const auto ex = compute_topic_expectations(model);

    const auto D = static_cast<std::ptrdiff_t>(observed.size());
    Matrix doc_ll(observed.size(), T, 0.0);
    std::vector<char> no_observed(observed.size(), 0);
    std::exception_ptr error;

#pragma omp parallel for schedule(dynamic, 16) num_threads(exec.threads)
    for (std::ptrdiff_t d = 0; d < D; ++d) {
        try {
            const auto& obs = observed.docs[d];
            const auto& hld = held.docs[d];
            if (hld.empty()) continue;
            std::vector<double> theta;
            if (obs.empty()) {
                theta.assign(K, 1.0 / static_cast<double>(K));
                no_observed[d] = 1;
            } else {
                theta = e_step_document(obs, model, ex, opts).posterior.loadings;
            }
            for (std::size_t t = 0; t < T; ++t) {
                double ll = 0.0;
                for (const auto& tc : hld.cats[t]) {
                    if (tc.id >= beta_wk[t].rows)
                        throw ValidationError("document '" + hld.id + "': held token_id " +
                                              std::to_string(tc.id) + " out of range");
                    const auto b = beta_wk[t].row(tc.id);
                    double p = 0.0;
                    for (std::size_t k = 0; k < K; ++k) p += theta[k] * b[k];
                    ll += tc.count * std::log(p);
                }
                doc_ll(d, t) = ll;
            }
        } catch (...) {
#pragma omp critical(mixehr_ppl_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    PerplexityResult r;
    r.categories = model.category_names;
    r.held_tokens.assign(T, 0);
    r.log_likelihood.assign(T, 0.0);
    r.perplexity.assign(T, std::numeric_limits<double>::quiet_NaN());
    double total_ll = 0.0;
    for (std::size_t d = 0; d < observed.size(); ++d) {
        const auto& hld = held.docs[d];
        if (hld.empty()) continue;
        ++r.docs_evaluated;
        r.docs_without_observed += no_observed[d];
        for (std::size_t t = 0; t < T; ++t) {
            r.held_tokens[t] += hld.category_total(t);
            r.log_likelihood[t] += doc_ll(d, t);
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        r.total_held_tokens += r.held_tokens[t];
        total_ll += r.log_likelihood[t];
        if (r.held_tokens[t] > 0)
            r.perplexity[t] = std::exp(-r.log_likelihood[t] / static_cast<double>(r.held_tokens[t]));
    }
    if (r.total_held_tokens == 0) throw ValidationError("held-out corpus contains no tokens");
    r.combined = std::exp(-total_ll / static_cast<double>(r.total_held_tokens));
    return r;
}

SweepResult topic_sweep(const MultiCorpus& corpus, const std::vector<std::size_t>& Ks,
                        const TrainConfig& base, double ratio, std::uint64_t seed) {
    if (Ks.empty()) throw ValidationError("topic sweep needs at least one K");
    const auto [observed, held] = split_holdout(corpus, ratio, seed);
    const EStepOptions opts{base.tol, base.max_iters};

    SweepResult out;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t K : Ks) {
        TrainConfig cfg = base;
        cfg.K = K;
        const auto t0 = std::chrono::steady_clock::now();
        const auto trained = train_online(observed, cfg);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const auto ppl = held_out_perplexity(trained.model, observed, held, opts, cfg.exec);
        out.rows.push_back({K, ppl.combined, secs});
        if (ppl.combined < best) {
            best = ppl.combined;
            out.best_K = K;
        }
    }
    return out;
}

}  // namespace mixehr
