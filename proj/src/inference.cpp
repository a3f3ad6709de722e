#include "mixehr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixehr/error.hpp"
#include "mixehr/special.hpp"

namespace mixehr {

std::string to_string(GammaAveraging g) {
    return g == GammaAveraging::AllCategories ? "all" : "per-present";
}

GammaAveraging parse_gamma_averaging(const std::string& s) {
    if (s == "all") return GammaAveraging::AllCategories;
    if (s == "per-present") return GammaAveraging::PresentCategories;
    throw ValidationError("unknown gamma averaging mode '" + s + "' (expected all|per-present)");
}

std::vector<std::size_t> ModelState::vocab_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& m : lambda) out.push_back(m.cols);
    return out;
}

void ModelState::validate() const {
    if (K == 0) throw ValidationError("model: K must be positive");
    const auto T = lambda.size();
    if (T == 0) throw ValidationError("model: no categories");
    if (category_names.size() != T || eta.size() != T)
        throw ValidationError("model: category_names/eta/lambda counts disagree");
    if (!(alpha > 0.0)) throw ValidationError("model: alpha must be positive");
    if (!(tau0 >= 0.0)) throw ValidationError("model: tau0 must be >= 0");
    if (!(kappa > 0.5 && kappa <= 1.0)) throw ValidationError("model: kappa must lie in (0.5, 1]");
    if (D_total == 0) throw ValidationError("model: D_total must be positive");
    for (std::size_t t = 0; t < T; ++t) {
        if (!(eta[t] > 0.0))
            throw ValidationError("model: eta for '" + category_names[t] + "' must be positive");
        if (lambda[t].rows != K || lambda[t].cols == 0)
            throw ValidationError("model: lambda for '" + category_names[t] + "' has bad shape");
        for (double x : lambda[t].data)
            if (!(x > 0.0) || !std::isfinite(x))
                throw ValidationError("model: lambda for '" + category_names[t] +
                                      "' has a non-positive or non-finite entry");
    }
}

Matrix expected_beta(const ModelState& model, std::size_t t) {
    Matrix out = model.lambda.at(t);
    for (std::size_t k = 0; k < out.rows; ++k) {
        auto row = out.row(k);
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        for (double& x : row) x /= total;
    }
    return out;
}

TopicExpectations compute_topic_expectations(const ModelState& model) {
    TopicExpectations ex;
    ex.elog_beta.reserve(model.num_categories());
    std::vector<double> row_elog;
    for (const auto& lam : model.lambda) {
        Matrix e(lam.cols, lam.rows);
        row_elog.resize(lam.cols);
        for (std::size_t k = 0; k < lam.rows; ++k) {
            dirichlet_log_expectation(lam.row(k), row_elog);
            for (std::size_t w = 0; w < lam.cols; ++w) e(w, k) = row_elog[w];
        }
        ex.elog_beta.push_back(std::move(e));
    }
    return ex;
}

namespace {

void check_document_shape(const Document& doc, const ModelState& model) {
    if (doc.cats.size() != model.num_categories())
        throw ValidationError("document '" + doc.id + "': " + std::to_string(doc.cats.size()) +
                              " categories, model has " + std::to_string(model.num_categories()));
    for (std::size_t t = 0; t < doc.cats.size(); ++t)
        for (const auto& tc : doc.cats[t])
            if (tc.id >= model.lambda[t].cols)
                throw ValidationError("document '" + doc.id + "': token_id " +
                                      std::to_string(tc.id) + " out of range for category '" +
                                      model.category_names[t] + "'");
}

}  // namespace

EStepResult e_step_document(const Document& doc, const ModelState& model,
                            const TopicExpectations& expectations, const EStepOptions& opts,
                            std::span<const double> gamma_init) {
    check_document_shape(doc, model);
    const std::size_t K = model.K;
    const std::size_t T = model.num_categories();
    const auto N = doc.total();
    if (N == 0) throw ValidationError("document '" + doc.id + "': all categories are empty");
    if (!gamma_init.empty() && gamma_init.size() != K)
        throw ValidationError("gamma_init has wrong length");

    const double divisor = model.gamma_avg == GammaAveraging::AllCategories
                               ? static_cast<double>(T)
                               : static_cast<double>(doc.nonempty_categories());

    EStepResult r;
    r.phi.K = K;
    r.phi.phi.resize(T);
    for (std::size_t t = 0; t < T; ++t) r.phi.phi[t].assign(doc.cats[t].size() * K, 0.0);

    auto& gamma = r.posterior.gamma;
    if (gamma_init.empty())
        gamma.assign(K, model.alpha + static_cast<double>(N) / (divisor * static_cast<double>(K)));
    else
        gamma.assign(gamma_init.begin(), gamma_init.end());

    std::vector<double> elog_theta(K), acc(K), logp(K);
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        dirichlet_log_expectation(gamma, elog_theta);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            const auto& elog_beta = expectations.elog_beta[t];
            double* phi = r.phi.phi[t].data();
            for (const auto& tc : doc.cats[t]) {
                const auto eb = elog_beta.row(tc.id);
                double mx = -INFINITY;
                for (std::size_t k = 0; k < K; ++k) {
                    logp[k] = elog_theta[k] + eb[k];
                    mx = std::max(mx, logp[k]);
                }
                double norm = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    phi[k] = std::exp(logp[k] - mx);
                    norm += phi[k];
                }
                const double n = tc.count;
                for (std::size_t k = 0; k < K; ++k) {
                    phi[k] /= norm;
                    acc[k] += n * phi[k];
                }
                phi += K;
            }
        }
        double change = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double updated = model.alpha + acc[k] / divisor;
            change += std::abs(updated - gamma[k]);
            gamma[k] = updated;
        }
        r.posterior.n_iters = iter + 1;
        if (change / static_cast<double>(K) < opts.tol) {
            r.posterior.converged = true;
            break;
        }
    }

    const double total = std::accumulate(gamma.begin(), gamma.end(), 0.0);
    r.posterior.loadings.resize(K);
    for (std::size_t k = 0; k < K; ++k) r.posterior.loadings[k] = gamma[k] / total;
    return r;
}

EStepResult e_step_document(const Document& doc, const ModelState& model,
                            const EStepOptions& opts) {
    return e_step_document(doc, model, compute_topic_expectations(model), opts);
}

SuffStats SuffStats::zeros(const ModelState& model) {
    SuffStats st;
    for (const auto& lam : model.lambda) st.s.emplace_back(lam.rows, lam.cols, 0.0);
    return st;
}

void SuffStats::add(const Document& doc, const PhiSlice& phi) {
    for (std::size_t t = 0; t < doc.cats.size(); ++t) {
        auto& m = s[t];
        for (std::size_t i = 0; i < doc.cats[t].size(); ++i) {
            const auto& tc = doc.cats[t][i];
            const auto p = phi.at(t, i);
            const double n = tc.count;
            for (std::size_t k = 0; k < phi.K; ++k) m(k, tc.id) += n * p[k];
        }
    }
    ++docs;
}

ElboTerms elbo_document(const Document& doc, const EStepResult& result, const ModelState& model,
                        const TopicExpectations& expectations) {
    const std::size_t K = model.K;
    const auto& gamma = result.posterior.gamma;
    const auto elog_theta = dirichlet_log_expectation(gamma);

    ElboTerms e;
    for (std::size_t t = 0; t < doc.cats.size(); ++t) {
        for (std::size_t i = 0; i < doc.cats[t].size(); ++i) {
            const auto& tc = doc.cats[t][i];
            const auto p = result.phi.at(t, i);
            const auto eb = expectations.elog_beta[t].row(tc.id);
            double tok = 0.0, asg = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                if (p[k] <= 0.0) continue;
                tok += p[k] * eb[k];
                asg += p[k] * (elog_theta[k] - std::log(p[k]));
            }
            e.token_likelihood += tc.count * tok;
            e.assignment += tc.count * asg;
        }
    }

    const double a = model.alpha;
    double gsum = 0.0;
    e.theta = std::lgamma(a * static_cast<double>(K)) - static_cast<double>(K) * std::lgamma(a);
    for (std::size_t k = 0; k < K; ++k) {
        e.theta += (a - gamma[k]) * elog_theta[k] + std::lgamma(gamma[k]);
        gsum += gamma[k];
    }
    e.theta -= std::lgamma(gsum);
    return e;
}

double elbo_beta_term(const ModelState& model, const TopicExpectations& expectations) {
    double total = 0.0;
    for (std::size_t t = 0; t < model.num_categories(); ++t) {
        const auto& lam = model.lambda[t];
        const auto& eb = expectations.elog_beta[t];
        const double eta = model.eta[t];
        const double V = static_cast<double>(lam.cols);
        const double prior_norm = std::lgamma(V * eta) - V * std::lgamma(eta);
        for (std::size_t k = 0; k < lam.rows; ++k) {
            double row_sum = 0.0;
            double acc = 0.0;
            for (std::size_t w = 0; w < lam.cols; ++w) {
                const double l = lam(k, w);
                acc += (eta - l) * eb(w, k) + std::lgamma(l);
                row_sum += l;
            }
            total += acc - std::lgamma(row_sum) + prior_norm;
        }
    }
    return total;
}

double elbo_minibatch(std::span<const Document* const> docs, std::span<const EStepResult> results,
                      const ModelState& model, const TopicExpectations& expectations) {
    if (docs.size() != results.size())
        throw ValidationError("elbo_minibatch: documents and results differ in length");
    ElboTerms sum;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto e = elbo_document(*docs[i], results[i], model, expectations);
        sum.token_likelihood += e.token_likelihood;
        sum.assignment += e.assignment;
        sum.theta += e.theta;
    }
    sum.beta = elbo_beta_term(model, expectations);

    const std::pair<const char*, double> terms[] = {{"token_likelihood", sum.token_likelihood},
                                                    {"assignment", sum.assignment},
                                                    {"theta", sum.theta},
                                                    {"beta", sum.beta}};
    for (const auto& [name, v] : terms)
        if (!std::isfinite(v))
            throw ValidationError(std::string("ELBO term '") + name + "' is not finite");

    const double scale = docs.empty() ? 0.0
                                      : static_cast<double>(model.D_total) /
                                            static_cast<double>(docs.size());
    return scale * sum.local() + sum.beta;
}

}  // namespace mixehr
