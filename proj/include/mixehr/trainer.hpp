#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mixehr/corpus.hpp"
#include "mixehr/inference.hpp"
#include "mixehr/kernels.hpp"

namespace mixehr {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCheckpointFormatVersion = 1;

struct TrainConfig {
    std::size_t K = 10;
    std::optional<double> alpha;  // default 1/K
    std::vector<double> eta;      // empty: 0.01 for every category; one value: broadcast
    double tau0 = 256.0;
    double kappa = 0.7;
    std::size_t batch_size = 1024;
    std::size_t passes = 1;
    std::uint64_t seed = 0;
    double tol = 1e-3;
    int max_iters = 100;
    std::size_t checkpoint_every = 0;  // steps; 0 disables intermediate checkpoints
    std::filesystem::path checkpoint_dir;
    double eval_fraction = 0.0;      // token holdout ratio used by the CLI
    std::optional<double> fixed_rho;  // overrides the schedule when set
    GammaAveraging gamma_avg = GammaAveraging::AllCategories;
    bool compute_elbo = true;
    ExecPolicy exec;

    void validate() const;
    double resolved_alpha() const { return alpha.value_or(1.0 / static_cast<double>(K)); }
    std::vector<double> resolved_eta(std::size_t T) const;
};

struct StepRecord {
    std::uint64_t step;
    double rho;
    double elbo;
    double docs_per_sec;
};

struct PassRecord {
    std::size_t pass;
    double perplexity;
};

struct TrainReport {
    std::vector<StepRecord> steps;
    std::vector<PassRecord> passes;
    std::size_t skipped_empty_docs = 0;

    // step<TAB>rho<TAB>elbo<TAB>docs_per_sec
    void write_tsv(std::ostream& out) const;
};

// rho_t = (tau0 + step)^-kappa. Throws ValidationError if tau0 + step < 1
// or kappa is outside (0.5, 1].
double learning_rate(std::uint64_t step, double tau0, double kappa);

// lambda <- (1 - rho) lambda + rho (eta + D_total / batch_size * stats).
// Increments model.step.
void m_step(ModelState& model, const SuffStats& stats, std::size_t batch_size, double rho);

// Fresh model: lambda^t_kw = eta_t + Gamma(100, 0.01) noise, seeded.
ModelState init_model(const std::vector<std::string>& category_names,
                      const std::vector<std::size_t>& vocab_sizes, const TrainConfig& cfg,
                      std::uint64_t D_total);

// Held-out data scored after every pass when passed to train_online.
struct Validation {
    const MultiCorpus* observed = nullptr;
    const MultiCorpus* held = nullptr;
};

using ProgressFn = std::function<void(const StepRecord&)>;

struct TrainResult {
    ModelState model;
    TrainReport report;
};

TrainResult train_online(const MultiCorpus& corpus, const TrainConfig& cfg,
                         const Validation& validation = {}, const ProgressFn& progress = {});

// Continues training an existing model on `corpus`; D_total is reset to the
// new corpus size while lambda and the step counter carry over.
TrainResult train_online(ModelState model, const MultiCorpus& corpus, const TrainConfig& cfg,
                         const Validation& validation = {}, const ProgressFn& progress = {});

// Document visiting order for one pass; a pure function of (seed, pass).
std::vector<std::size_t> pass_order(std::size_t n, std::uint64_t seed, std::size_t pass);

// Checkpoint directory: meta.json plus lambda_<cat>.bin per category.
// Vocabularies, when given, are stored as vocab_<cat>.tsv for later reports.
void save_checkpoint(const ModelState& model, const std::filesystem::path& dir,
                     const std::vector<Vocabulary>* vocabs = nullptr);
ModelState load_checkpoint(const std::filesystem::path& dir);

// Vocabularies stored next to a checkpoint, if any.
std::optional<std::vector<Vocabulary>> load_checkpoint_vocabs(const std::filesystem::path& dir);

}  // namespace mixehr
