#include "mixehr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "mixehr/error.hpp"
#include "mixehr/evaluation.hpp"

namespace mixehr {

void TrainConfig::validate() const {
    if (K < 1) throw ValidationError("K must be positive");
    if (alpha && !(*alpha > 0.0)) throw ValidationError("alpha must be positive");
    for (double e : eta)
        if (!(e > 0.0)) throw ValidationError("eta must be positive");
    if (!(tau0 >= 0.0)) throw ValidationError("tau0 must be >= 0");
    if (!(kappa > 0.5 && kappa <= 1.0)) throw ValidationError("kappa must lie in (0.5, 1]");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (passes < 1) throw ValidationError("passes must be >= 1");
    if (!(tol >= 0.0)) throw ValidationError("tol must be >= 0");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
        throw ValidationError("eval_fraction must lie in [0, 1)");
    if (fixed_rho && !(*fixed_rho > 0.0 && *fixed_rho <= 1.0))
        throw ValidationError("fixed rho must lie in (0, 1]");
    if (exec.threads < 1) throw ValidationError("threads must be >= 1");
}

std::vector<double> TrainConfig::resolved_eta(std::size_t T) const {
    if (eta.empty()) return std::vector<double>(T, 0.01);
    if (eta.size() == 1) return std::vector<double>(T, eta.front());
    if (eta.size() != T)
        throw ValidationError("got " + std::to_string(eta.size()) + " eta values for " +
                              std::to_string(T) + " categories");
    return eta;
}

void TrainReport::write_tsv(std::ostream& out) const {
    out << "step\trho\telbo\tdocs_per_sec\n";
    out << std::setprecision(17);
    for (const auto& s : steps)
        out << s.step << '\t' << s.rho << '\t' << s.elbo << '\t' << s.docs_per_sec << '\n';
}

double learning_rate(std::uint64_t step, double tau0, double kappa) {
    if (!(kappa > 0.5 && kappa <= 1.0)) throw ValidationError("kappa must lie in (0.5, 1]");
    const double base = tau0 + static_cast<double>(step);
    if (!(base >= 1.0))
        throw ValidationError("learning rate needs tau0 + step >= 1, got " + std::to_string(base));
    return std::pow(base, -kappa);
}

void m_step(ModelState& model, const SuffStats& stats, std::size_t batch_size, double rho) {
    if (!(rho > 0.0 && rho <= 1.0))
        throw ValidationError("m_step: rho must lie in (0, 1], got " + std::to_string(rho));
    if (batch_size == 0) throw ValidationError("m_step: batch_size must be positive");
    if (stats.s.size() != model.lambda.size())
        throw ValidationError("m_step: statistics have the wrong number of categories");
    for (std::size_t t = 0; t < stats.s.size(); ++t)
        if (!stats.s[t].same_shape(model.lambda[t]))
            throw ValidationError("m_step: statistics shape mismatch for category '" +
                                  model.category_names[t] + "'");

    const double scale = static_cast<double>(model.D_total) / static_cast<double>(batch_size);
    const double keep = 1.0 - rho;
    for (std::size_t t = 0; t < stats.s.size(); ++t) {
        auto& lam = model.lambda[t].data;
        const auto& s = stats.s[t].data;
        const double eta = model.eta[t];
        for (std::size_t j = 0; j < lam.size(); ++j)
            lam[j] = keep * lam[j] + rho * (eta + scale * s[j]);
    }
    ++model.step;
}

ModelState init_model(const std::vector<std::string>& category_names,
                      const std::vector<std::size_t>& vocab_sizes, const TrainConfig& cfg,
                      std::uint64_t D_total) {
    cfg.validate();
    ModelState m;
    m.K = cfg.K;
    m.category_names = category_names;
    m.alpha = cfg.resolved_alpha();
    m.eta = cfg.resolved_eta(category_names.size());
    m.tau0 = cfg.tau0;
    m.kappa = cfg.kappa;
    m.step = 0;
    m.D_total = D_total;
    m.seed = cfg.seed;
    m.gamma_avg = cfg.gamma_avg;

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                      static_cast<std::uint32_t>(cfg.seed >> 32), 0x6c616d62u};
    std::mt19937_64 rng(seq);
    std::gamma_distribution<double> noise(100.0, 0.01);
    for (std::size_t t = 0; t < vocab_sizes.size(); ++t) {
        Matrix lam(cfg.K, vocab_sizes[t]);
        for (double& x : lam.data) x = m.eta[t] + noise(rng);
        m.lambda.push_back(std::move(lam));
    }
    m.validate();
    return m;
}

std::vector<std::size_t> pass_order(std::size_t n, std::uint64_t seed, std::size_t pass) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(pass), 0x73687566u};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

namespace {

struct PreparedCorpus {
    std::vector<const Document*> docs;
    std::size_t skipped = 0;
};

PreparedCorpus prepare(const MultiCorpus& corpus) {
    if (corpus.docs.empty()) throw ValidationError("cannot train on an empty corpus");
    const auto sizes = corpus.vocab_sizes();
    PreparedCorpus p;
    for (const auto& doc : corpus.docs) {
        validate_document(doc, sizes);
        if (doc.empty())
            ++p.skipped;
        else
            p.docs.push_back(&doc);
    }
    if (p.docs.empty()) throw ValidationError("every document in the corpus is empty");
    return p;
}

TrainResult run_training(ModelState model, const PreparedCorpus& prepared, const TrainConfig& cfg,
                         const Validation& validation, const ProgressFn& progress) {
    using clock = std::chrono::steady_clock;
    TrainResult result;
    result.report.skipped_empty_docs = prepared.skipped;
    const EStepOptions opts{cfg.tol, cfg.max_iters};
    const auto n = prepared.docs.size();

    std::vector<const Document*> batch;
    batch.reserve(std::min(cfg.batch_size, n));
    for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
        const auto order = pass_order(n, cfg.seed, pass);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const auto t0 = clock::now();
            batch.clear();
            for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i)
                batch.push_back(prepared.docs[order[i]]);

            const auto ex = compute_topic_expectations(model);
            auto out = estep_batch(batch, model, ex, opts, cfg.compute_elbo, cfg.exec);
            double elbo = std::numeric_limits<double>::quiet_NaN();
            if (cfg.compute_elbo) {
                const double scale =
                    static_cast<double>(model.D_total) / static_cast<double>(batch.size());
                elbo = scale * out.local_elbo + elbo_beta_term(model, ex);
            }
            const double rho =
                cfg.fixed_rho ? *cfg.fixed_rho : learning_rate(model.step, model.tau0, model.kappa);
            m_step(model, out.stats, batch.size(), rho);

            const double secs = std::chrono::duration<double>(clock::now() - t0).count();
            StepRecord rec{model.step - 1, rho, elbo,
                           secs > 0 ? static_cast<double>(batch.size()) / secs : 0.0};
            result.report.steps.push_back(rec);
            if (progress) progress(rec);

            if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
                model.step % cfg.checkpoint_every == 0)
                save_checkpoint(model, cfg.checkpoint_dir);
        }
        if (validation.observed && validation.held) {
            const auto ppl =
                held_out_perplexity(model, *validation.observed, *validation.held, opts, cfg.exec);
            result.report.passes.push_back({pass + 1, ppl.combined});
        }
    }
    result.model = std::move(model);
    return result;
}

}  // namespace

TrainResult train_online(const MultiCorpus& corpus, const TrainConfig& cfg,
                         const Validation& validation, const ProgressFn& progress) {
    cfg.validate();
    const auto prepared = prepare(corpus);
    auto model =
        init_model(corpus.category_names(), corpus.vocab_sizes(), cfg, prepared.docs.size());
    return run_training(std::move(model), prepared, cfg, validation, progress);
}

TrainResult train_online(ModelState model, const MultiCorpus& corpus, const TrainConfig& cfg,
                         const Validation& validation, const ProgressFn& progress) {
    cfg.validate();
    model.validate();
    if (model.vocab_sizes() != corpus.vocab_sizes())
        throw ValidationError("corpus vocabularies do not match the model's shapes");
    const auto prepared = prepare(corpus);
    model.D_total = prepared.docs.size();
    return run_training(std::move(model), prepared, cfg, validation, progress);
}

}  // namespace mixehr
