#include "mixehr/kernels.hpp"

#include <cmath>
#include <exception>

#include <omp.h>

namespace mixehr {

namespace {

// Holds the first exception raised inside a parallel region.
class ErrorSlot {
public:
    template <class F>
    void run(F&& f) noexcept {
        try {
            f();
        } catch (...) {
#pragma omp critical(mixehr_error_slot)
            if (!error_) error_ = std::current_exception();
        }
    }
    void rethrow() const {
        if (error_) std::rethrow_exception(error_);
    }

private:
    std::exception_ptr error_;
};

}  // namespace

BatchEStep estep_batch_serial(std::span<const Document* const> docs, const ModelState& model,
                              const TopicExpectations& ex, const EStepOptions& opts,
                              bool with_elbo) {
    BatchEStep out;
    out.stats = SuffStats::zeros(model);
    out.posteriors.reserve(docs.size());
    for (const Document* doc : docs) {
        auto r = e_step_document(*doc, model, ex, opts);
        out.stats.add(*doc, r.phi);
        if (with_elbo) out.local_elbo += elbo_document(*doc, r, model, ex).local();
        out.posteriors.push_back(std::move(r.posterior));
    }
    return out;
}

BatchEStep estep_batch_parallel(std::span<const Document* const> docs, const ModelState& model,
                                const TopicExpectations& ex, const EStepOptions& opts,
                                bool with_elbo, const ExecPolicy& exec) {
    const auto n = static_cast<std::ptrdiff_t>(docs.size());
    BatchEStep out;
    out.stats = SuffStats::zeros(model);
    out.posteriors.resize(docs.size());
    std::vector<double> elbo(docs.size(), 0.0);
    ErrorSlot errors;

    if (exec.deterministic) {
        std::vector<PhiSlice> phis(docs.size());
#pragma omp parallel for schedule(dynamic, 8) num_threads(exec.threads)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            errors.run([&] {
                auto r = e_step_document(*docs[i], model, ex, opts);
                if (with_elbo) elbo[i] = elbo_document(*docs[i], r, model, ex).local();
                out.posteriors[i] = std::move(r.posterior);
                phis[i] = std::move(r.phi);
            });
        }
        errors.rethrow();
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            out.stats.add(*docs[i], phis[i]);
            out.local_elbo += elbo[i];
        }
        return out;
    }

#pragma omp parallel num_threads(exec.threads)
    {
        auto local = SuffStats::zeros(model);
#pragma omp for schedule(dynamic, 8)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            errors.run([&] {
                auto r = e_step_document(*docs[i], model, ex, opts);
                if (with_elbo) elbo[i] = elbo_document(*docs[i], r, model, ex).local();
                local.add(*docs[i], r.phi);
                out.posteriors[i] = std::move(r.posterior);
            });
        }
#pragma omp critical(mixehr_stats_merge)
        {
            for (std::size_t t = 0; t < local.s.size(); ++t) {
                auto& dst = out.stats.s[t].data;
                const auto& src = local.s[t].data;
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
            out.stats.docs += local.docs;
        }
    }
    errors.rethrow();
    for (double e : elbo) out.local_elbo += e;
    return out;
}

BatchEStep estep_batch(std::span<const Document* const> docs, const ModelState& model,
                       const TopicExpectations& ex, const EStepOptions& opts, bool with_elbo,
                       const ExecPolicy& exec) {
    if (exec.threads <= 1) return estep_batch_serial(docs, model, ex, opts, with_elbo);
    return estep_batch_parallel(docs, model, ex, opts, with_elbo, exec);
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b, double na, double nb) {
    double dot = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
    return dot / (na * nb);
}

std::vector<double> row_norms(const Matrix& v) {
    std::vector<double> norms(v.rows);
    for (std::size_t i = 0; i < v.rows; ++i) {
        double s = 0.0;
        for (double x : v.row(i)) s += x * x;
        norms[i] = std::sqrt(s);
    }
    return norms;
}

}  // namespace

Matrix cosine_similarity_serial(const Matrix& vectors) {
    const auto norms = row_norms(vectors);
    Matrix S(vectors.rows, vectors.rows);
    for (std::size_t i = 0; i < vectors.rows; ++i) {
        S(i, i) = 1.0;
        for (std::size_t j = i + 1; j < vectors.rows; ++j) {
            const double c = cosine(vectors.row(i), vectors.row(j), norms[i], norms[j]);
            S(i, j) = c;
            S(j, i) = c;
        }
    }
    return S;
}

Matrix cosine_similarity_parallel(const Matrix& vectors, const ExecPolicy& exec) {
    const auto norms = row_norms(vectors);
    const auto n = static_cast<std::ptrdiff_t>(vectors.rows);
    Matrix S(vectors.rows, vectors.rows);
    // Every entry is written by exactly one thread; the lower triangle is
    // mirrored afterwards so each value is computed once.
#pragma omp parallel for schedule(dynamic, 16) num_threads(exec.threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        S(i, i) = 1.0;
        for (std::ptrdiff_t j = i + 1; j < n; ++j)
            S(i, j) = cosine(vectors.row(i), vectors.row(j), norms[i], norms[j]);
    }
    for (std::ptrdiff_t i = 0; i < n; ++i)
        for (std::ptrdiff_t j = i + 1; j < n; ++j) S(j, i) = S(i, j);
    return S;
}

}  // namespace mixehr
