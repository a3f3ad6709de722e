#include "mixehr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <span>

#include <json.hpp>

#include "mixehr/binary_matrix.hpp"
#include "mixehr/error.hpp"

namespace mixehr {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> default_category_names(std::size_t T) {
    static const char* known[] = {"dx", "rx", "px", "lab"};
    std::vector<std::string> out;
    for (std::size_t t = 0; t < T; ++t)
        out.push_back(t < 4 ? known[t] : "cat" + std::to_string(t));
    return out;
}

std::vector<Vocabulary> synthetic_vocabs(const std::vector<std::string>& names,
                                         const std::vector<std::size_t>& sizes) {
    std::vector<Vocabulary> out;
    for (std::size_t t = 0; t < names.size(); ++t) {
        std::string prefix = names[t];
        std::transform(prefix.begin(), prefix.end(), prefix.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        Vocabulary v(names[t]);
        for (std::size_t w = 0; w < sizes[t]; ++w) {
            char code[64];
            std::snprintf(code, sizeof code, "%s_%05zu", prefix.c_str(), w);
            v.add(code, "synthetic " + names[t] + " code " + std::to_string(w));
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<double> sample_dirichlet(std::mt19937_64& rng, std::span<const double> concentration) {
    std::vector<double> logx(concentration.size());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < concentration.size(); ++i) {
        const double a = concentration[i];
        if (!(a > 0.0)) throw ValidationError("Dirichlet concentration must be positive");
        if (a >= 1.0) {
            logx[i] = std::log(std::gamma_distribution<double>(a, 1.0)(rng));
        } else {
            // Gamma(a) = Gamma(a + 1) * U^(1/a)
            const double g = std::gamma_distribution<double>(a + 1.0, 1.0)(rng);
            double u = unif(rng);
            while (u <= 0.0) u = unif(rng);
            logx[i] = std::log(g) + std::log(u) / a;
        }
    }
    const double mx = *std::max_element(logx.begin(), logx.end());
    double total = 0.0;
    for (double& x : logx) {
        x = std::exp(x - mx);
        total += x;
    }
    for (double& x : logx) x /= total;
    return logx;
}

std::vector<double> sample_symmetric_dirichlet(std::mt19937_64& rng, std::size_t n, double a) {
    const std::vector<double> conc(n, a);
    return sample_dirichlet(rng, conc);
}

SynthGroundTruth generate_model(std::size_t K, const std::vector<std::size_t>& vocab_sizes,
                                double alpha, const std::vector<double>& eta, std::uint64_t seed,
                                std::vector<std::string> category_names) {
    if (K < 2) throw ValidationError("synthetic models need K >= 2");
    if (vocab_sizes.empty()) throw ValidationError("at least one category is required");
    if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
    if (eta.size() != vocab_sizes.size())
        throw ValidationError("need one eta per category");
    if (category_names.empty()) category_names = default_category_names(vocab_sizes.size());
    if (category_names.size() != vocab_sizes.size())
        throw ValidationError("need one name per category");
    for (std::size_t t = 0; t < vocab_sizes.size(); ++t) {
        if (vocab_sizes[t] == 0) throw ValidationError("vocabulary sizes must be positive");
        if (!(eta[t] > 0.0)) throw ValidationError("eta must be positive");
    }

    SynthGroundTruth gt;
    gt.config.K = K;
    gt.config.categories = std::move(category_names);
    gt.config.vocab_sizes = vocab_sizes;
    gt.config.alpha = alpha;
    gt.config.eta = eta;
    gt.config.model_seed = seed;

    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < vocab_sizes.size(); ++t) {
        Matrix beta(K, vocab_sizes[t]);
        for (std::size_t k = 0; k < K; ++k) {
            const auto row = sample_symmetric_dirichlet(rng, vocab_sizes[t], eta[t]);
            std::copy(row.begin(), row.end(), beta.row(k).begin());
        }
        gt.beta.push_back(std::move(beta));
    }
    return gt;
}

namespace {

// Inverse-CDF sampling from a cumulative table.
std::size_t draw(std::mt19937_64& rng, const std::vector<double>& cdf) {
    const double u = std::uniform_real_distribution<double>(0.0, cdf.back())(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(std::span<const double> p) {
    std::vector<double> cdf(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    return cdf;
}

std::vector<std::vector<std::vector<double>>> beta_cdfs(const SynthGroundTruth& gt) {
    std::vector<std::vector<std::vector<double>>> out(gt.beta.size());
    for (std::size_t t = 0; t < gt.beta.size(); ++t)
        for (std::size_t k = 0; k < gt.beta[t].rows; ++k)
            out[t].push_back(cumulative(gt.beta[t].row(k)));
    return out;
}

std::vector<TokenCount> draw_tokens(std::mt19937_64& rng, const std::vector<double>& theta_cdf,
                                    const std::vector<std::vector<double>>& topic_cdfs,
                                    std::size_t n) {
    std::map<TokenId, std::uint32_t> counts;
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = draw(rng, theta_cdf);
        ++counts[static_cast<TokenId>(draw(rng, topic_cdfs[z]))];
    }
    std::vector<TokenCount> out;
    for (const auto& [id, c] : counts) out.push_back({id, c});
    return out;
}

std::string doc_name(std::size_t d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%06zu", d);
    return buf;
}

}  // namespace

MultiCorpus generate_corpus(SynthGroundTruth& gt, std::size_t D,
                            const std::vector<std::size_t>& doc_len, std::uint64_t seed,
                            bool poisson_lengths) {
    if (gt.beta.empty()) throw ValidationError("ground truth has no topics");
    if (D < 1) throw ValidationError("D must be >= 1");
    const std::size_t T = gt.beta.size();
    const std::size_t K = gt.config.K;
    std::vector<std::size_t> lens = doc_len;
    if (lens.size() == 1) lens.assign(T, doc_len.front());
    if (lens.size() != T) throw ValidationError("need one document length per category");

    gt.config.D = D;
    gt.config.doc_len = lens;
    gt.config.poisson_lengths = poisson_lengths;
    gt.config.corpus_seed = seed;
    gt.theta = Matrix(D, K);
    gt.empty_docs.clear();

    MultiCorpus corpus;
    corpus.vocabs = synthetic_vocabs(gt.config.categories, gt.config.vocab_sizes);
    corpus.docs.reserve(D);
    const auto cdfs = beta_cdfs(gt);
    std::mt19937_64 rng(seed);
    for (std::size_t d = 0; d < D; ++d) {
        const auto theta = sample_symmetric_dirichlet(rng, K, gt.config.alpha);
        std::copy(theta.begin(), theta.end(), gt.theta.row(d).begin());
        const auto theta_cdf = cumulative(theta);
        Document doc{doc_name(d), std::vector<std::vector<TokenCount>>(T)};
        for (std::size_t t = 0; t < T; ++t) {
            std::size_t n = lens[t];
            if (poisson_lengths && n > 0)
                n = std::poisson_distribution<std::size_t>(static_cast<double>(lens[t]))(rng);
            doc.cats[t] = draw_tokens(rng, theta_cdf, cdfs[t], n);
        }
        if (doc.empty()) gt.empty_docs.push_back(doc.id);
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

void plant_synonyms(SynthGroundTruth& gt, std::size_t category, std::size_t n_pairs,
                    double epsilon, std::uint64_t seed) {
    if (category >= gt.beta.size()) throw ValidationError("synonym category out of range");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in [0, 1)");
    auto& beta = gt.beta[category];
    if (2 * n_pairs > beta.cols)
        throw ValidationError("cannot plant " + std::to_string(n_pairs) + " synonym pairs in a " +
                              std::to_string(beta.cols) + "-code vocabulary");
    gt.config.synonym_category = category;
    gt.config.synonym_pairs = n_pairs;
    gt.config.synonym_epsilon = epsilon;
    gt.config.synonym_seed = seed;
    if (n_pairs == 0) return;

    std::mt19937_64 rng(seed);
    std::vector<TokenId> ids(beta.cols);
    std::iota(ids.begin(), ids.end(), TokenId{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    std::uniform_real_distribution<double> noise(-epsilon, epsilon);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const TokenId a = ids[2 * p], b = ids[2 * p + 1];
        for (std::size_t k = 0; k < beta.rows; ++k) beta(k, b) = beta(k, a) * (1.0 + noise(rng));
        gt.synonyms.push_back({category, a, b});
    }
    for (std::size_t k = 0; k < beta.rows; ++k) {
        auto row = beta.row(k);
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        for (double& x : row) x /= total;
    }
}

std::vector<CohortAssignment> plant_cohorts(
    SynthGroundTruth& gt, MultiCorpus& corpus,
    const std::vector<std::pair<std::string, std::size_t>>& cohort_topics,
    std::size_t cohort_size, double boost, std::uint64_t seed) {
    if (!(boost > 0.0 && boost < 1.0)) throw ValidationError("cohort boost must lie in (0, 1)");
    const std::size_t K = gt.config.K;
    for (const auto& [name, k] : cohort_topics)
        if (k >= K)
            throw ValidationError("cohort '" + name + "' targets unknown topic " + std::to_string(k));
    if (cohort_topics.size() * cohort_size > corpus.size())
        throw ValidationError("not enough documents for the requested cohorts");
    if (gt.theta.rows != corpus.size())
        throw ValidationError("ground truth theta does not match the corpus");

    gt.config.cohort_topics = cohort_topics;
    gt.config.cohort_size = cohort_size;
    gt.config.cohort_boost = boost;
    gt.config.cohort_seed = seed;

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    const auto cdfs = beta_cdfs(gt);
    std::vector<CohortAssignment> labels;
    std::size_t next = 0;
    for (const auto& [name, topic] : cohort_topics) {
        for (std::size_t i = 0; i < cohort_size; ++i) {
            const std::size_t d = order[next++];
            auto theta = sample_symmetric_dirichlet(rng, K, gt.config.alpha);
            for (std::size_t k = 0; k < K; ++k)
                theta[k] = (1.0 - boost) * theta[k] + (k == topic ? boost : 0.0);
            std::copy(theta.begin(), theta.end(), gt.theta.row(d).begin());
            const auto theta_cdf = cumulative(theta);
            auto& doc = corpus.docs[d];
            for (std::size_t t = 0; t < doc.cats.size(); ++t)
                doc.cats[t] = draw_tokens(rng, theta_cdf, cdfs[t], doc.category_total(t));
            labels.push_back({doc.id, name});
        }
    }
    gt.cohorts = labels;
    return labels;
}

// ----------------------------------------------------------------------------
// bundle persistence

namespace {

json config_to_json(const SynthConfig& c) {
    json j;
    j["K"] = c.K;
    j["categories"] = c.categories;
    j["vocab_sizes"] = c.vocab_sizes;
    j["alpha"] = c.alpha;
    j["eta"] = c.eta;
    j["model_seed"] = c.model_seed;
    j["D"] = c.D;
    j["doc_len"] = c.doc_len;
    j["poisson_lengths"] = c.poisson_lengths;
    j["corpus_seed"] = c.corpus_seed;
    j["synonyms"] = {{"category", c.synonym_category},
                     {"pairs", c.synonym_pairs},
                     {"epsilon", c.synonym_epsilon},
                     {"seed", c.synonym_seed}};
    json topics = json::array();
    for (const auto& [name, k] : c.cohort_topics) topics.push_back({{"name", name}, {"topic", k}});
    j["cohorts"] = {{"topics", topics},
                    {"size", c.cohort_size},
                    {"boost", c.cohort_boost},
                    {"seed", c.cohort_seed}};
    return j;
}

SynthConfig config_from_json(const json& j) {
    SynthConfig c;
    c.K = j.at("K").get<std::size_t>();
    c.categories = j.at("categories").get<std::vector<std::string>>();
    c.vocab_sizes = j.at("vocab_sizes").get<std::vector<std::size_t>>();
    c.alpha = j.at("alpha").get<double>();
    c.eta = j.at("eta").get<std::vector<double>>();
    c.model_seed = j.at("model_seed").get<std::uint64_t>();
    c.D = j.at("D").get<std::size_t>();
    c.doc_len = j.at("doc_len").get<std::vector<std::size_t>>();
    c.poisson_lengths = j.at("poisson_lengths").get<bool>();
    c.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
    const auto& s = j.at("synonyms");
    c.synonym_category = s.at("category").get<std::size_t>();
    c.synonym_pairs = s.at("pairs").get<std::size_t>();
    c.synonym_epsilon = s.at("epsilon").get<double>();
    c.synonym_seed = s.at("seed").get<std::uint64_t>();
    const auto& co = j.at("cohorts");
    for (const auto& t : co.at("topics"))
        c.cohort_topics.emplace_back(t.at("name").get<std::string>(), t.at("topic").get<std::size_t>());
    c.cohort_size = co.at("size").get<std::size_t>();
    c.cohort_boost = co.at("boost").get<double>();
    c.cohort_seed = co.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void save_bundle(const fs::path& dir, const SynthGroundTruth& gt, const MultiCorpus& corpus) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());

    {
        std::ofstream out(dir / "config.json", std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "config.json").string());
        out << config_to_json(gt.config).dump(2) << '\n';
    }
    write_matrix(dir / "theta.bin", gt.theta);
    for (std::size_t t = 0; t < gt.beta.size(); ++t)
        write_matrix(dir / ("beta_" + gt.config.categories[t] + ".bin"), gt.beta[t]);
    {
        std::ofstream out(dir / "synonyms.tsv", std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "synonyms.tsv").string());
        for (const auto& p : gt.synonyms)
            out << gt.config.categories[p.category] << '\t' << p.a << '\t' << p.b << '\n';
    }
    write_cohorts(dir / "cohorts.tsv", gt.cohorts);
    write_vocab_dir(dir, corpus.vocabs);
    write_corpus(dir / "corpus.jsonl", corpus);
}

SynthGroundTruth load_ground_truth(const fs::path& dir) {
    SynthGroundTruth gt;
    {
        std::ifstream in(dir / "config.json");
        if (!in) throw IoError("cannot open " + (dir / "config.json").string());
        try {
            gt.config = config_from_json(json::parse(in));
        } catch (const json::exception& e) {
            throw ValidationError((dir / "config.json").string() + ": " + e.what());
        }
    }
    gt.theta = read_matrix(dir / "theta.bin");
    for (const auto& name : gt.config.categories)
        gt.beta.push_back(read_matrix(dir / ("beta_" + name + ".bin")));
    {
        std::ifstream in(dir / "synonyms.tsv");
        if (!in) throw IoError("cannot open " + (dir / "synonyms.tsv").string());
        std::string cat;
        TokenId a = 0, b = 0;
        while (in >> cat >> a >> b) {
            const auto it = std::find(gt.config.categories.begin(), gt.config.categories.end(), cat);
            if (it == gt.config.categories.end())
                throw ValidationError("synonyms.tsv: unknown category '" + cat + "'");
            gt.synonyms.push_back(
                {static_cast<std::size_t>(it - gt.config.categories.begin()), a, b});
        }
    }
    gt.cohorts = load_cohorts(dir / "cohorts.tsv");
    return gt;
}

}  // namespace mixehr
