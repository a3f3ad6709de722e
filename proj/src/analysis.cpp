#include "mixehr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "mixehr/error.hpp"

namespace mixehr {

namespace fs = std::filesystem;

std::vector<Vocabulary> placeholder_vocabs(const ModelState& model) {
    std::vector<Vocabulary> out;
    for (std::size_t t = 0; t < model.num_categories(); ++t) {
        Vocabulary v(model.category_names[t]);
        for (std::size_t w = 0; w < model.lambda[t].cols; ++w)
            v.add(model.category_names[t] + ":" + std::to_string(w));
        out.push_back(std::move(v));
    }
    return out;
}

// ----------------------------------------------------------------------------
// topics

TopicReport topic_report(const ModelState& model, const std::vector<Vocabulary>& vocabs,
                         std::size_t top_n) {
    if (top_n == 0) throw ValidationError("top_n must be positive");
    const std::size_t T = model.num_categories();
    if (vocabs.size() != T) throw ValidationError("vocabulary count does not match the model");
    for (std::size_t t = 0; t < T; ++t)
        if (vocabs[t].size() != model.lambda[t].cols)
            throw ValidationError("vocabulary '" + vocabs[t].category() +
                                  "' size does not match the model");

    TopicReport report;
    report.K = model.K;
    report.categories = model.category_names;
    report.topics.assign(model.K, std::vector<std::vector<TopicEntry>>(T));
    for (std::size_t t = 0; t < T; ++t) {
        const auto beta = expected_beta(model, t);
        const std::size_t n = std::min(top_n, beta.cols);
        if (top_n > beta.cols) report.truncated = true;
        std::vector<TokenId> ids(beta.cols);
        for (std::size_t k = 0; k < model.K; ++k) {
            std::iota(ids.begin(), ids.end(), TokenId{0});
            const auto row = beta.row(k);
            std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(),
                              [&](TokenId a, TokenId b) {
                                  return row[a] != row[b] ? row[a] > row[b] : a < b;
                              });
            auto& list = report.topics[k][t];
            for (std::size_t r = 0; r < n; ++r) {
                const auto& e = vocabs[t][ids[r]];
                list.push_back({ids[r], e.code, e.description, row[ids[r]]});
            }
        }
    }
    return report;
}

// ----------------------------------------------------------------------------
// loadings and cohorts

LoadingsTable infer_loadings(const ModelState& model, const MultiCorpus& corpus,
                             const EStepOptions& opts, const ExecPolicy& exec) {
    model.validate();
    if (corpus.vocab_sizes() != model.vocab_sizes())
        throw ValidationError("corpus vocabularies do not match the model's shapes");
    const auto ex = compute_topic_expectations(model);
    const std::size_t K = model.K;

    LoadingsTable table;
    table.loadings = Matrix(corpus.size(), K);
    for (const auto& d : corpus.docs) table.doc_ids.push_back(d.id);

    const auto D = static_cast<std::ptrdiff_t>(corpus.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16) num_threads(exec.threads)
    for (std::ptrdiff_t d = 0; d < D; ++d) {
        try {
            const auto& doc = corpus.docs[d];
            auto row = table.loadings.row(d);
            if (doc.empty()) {
                std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(K));
                continue;
            }
            const auto r = e_step_document(doc, model, ex, opts);
            std::copy(r.posterior.loadings.begin(), r.posterior.loadings.end(), row.begin());
        } catch (...) {
#pragma omp critical(mixehr_loadings_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    for (const auto& d : corpus.docs)
        if (d.empty()) table.empty_docs.push_back(d.id);
    return table;
}

TopicSummary summarize(std::vector<double> v) {
    if (v.empty()) throw ValidationError("cannot summarise an empty sample");
    std::sort(v.begin(), v.end());
    const auto quantile = [&](double q) {
        const double h = static_cast<double>(v.size() - 1) * q;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return {v.front(), quantile(0.25), quantile(0.5), quantile(0.75), v.back(), mean};
}

CohortReport cohort_report(const LoadingsTable& loadings,
                           const std::vector<CohortAssignment>& cohorts) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < loadings.doc_ids.size(); ++i) row_of.emplace(loadings.doc_ids[i], i);

    std::vector<std::string> names;
    std::unordered_map<std::string, std::vector<std::size_t>> members;
    for (const auto& c : cohorts) {
        auto it = row_of.find(c.doc_id);
        if (it == row_of.end())
            throw ValidationError("cohort '" + c.cohort + "': doc_id '" + c.doc_id +
                                  "' has no loadings");
        auto [slot, inserted] = members.try_emplace(c.cohort);
        if (inserted) names.push_back(c.cohort);
        slot->second.push_back(it->second);
    }

    const std::size_t K = loadings.loadings.cols;
    CohortReport report;
    for (const auto& name : names) {
        const auto& rows = members[name];
        CohortSummary s;
        s.cohort = name;
        s.patients = rows.size();
        std::vector<double> values(rows.size());
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t i = 0; i < rows.size(); ++i) values[i] = loadings.loadings(rows[i], k);
            s.topics.push_back(summarize(values));
            if (s.topics[k].median > s.topics[s.dominant_topic].median) s.dominant_topic = k;
        }
        report.cohorts.push_back(std::move(s));
    }
    return report;
}

// ----------------------------------------------------------------------------
// similarity

CodeVectorMode parse_code_vector_mode(const std::string& s) {
    if (s == "uniform") return CodeVectorMode::Uniform;
    if (s == "weighted") return CodeVectorMode::Weighted;
    throw ValidationError("unknown code-vector mode '" + s + "' (expected uniform|weighted)");
}

std::vector<CodeTopicVector> code_topic_vectors(const ModelState& model, std::size_t category,
                                                const Vocabulary* vocab, CodeVectorMode mode) {
    if (category >= model.num_categories())
        throw ValidationError("category index " + std::to_string(category) + " out of range");
    const auto beta = expected_beta(model, category);
    if (vocab && vocab->size() != beta.cols)
        throw ValidationError("vocabulary size does not match the model");
    const std::size_t K = model.K;

    std::vector<double> prior(K, 1.0);
    if (mode == CodeVectorMode::Weighted) {
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double mass = 0.0;
            for (std::size_t t = 0; t < model.num_categories(); ++t)
                for (double l : model.lambda[t].row(k)) mass += std::max(0.0, l - model.eta[t]);
            prior[k] = mass;
            total += mass;
        }
        if (!(total > 0.0)) std::fill(prior.begin(), prior.end(), 1.0);
    }

    std::vector<CodeTopicVector> out;
    out.reserve(beta.cols);
    for (std::size_t w = 0; w < beta.cols; ++w) {
        CodeTopicVector v;
        v.category = category;
        v.id = static_cast<TokenId>(w);
        v.code = vocab ? (*vocab)[v.id].code
                       : model.category_names[category] + ":" + std::to_string(w);
        v.p_hat.resize(K);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            v.p_hat[k] = prior[k] * beta(k, w);
            total += v.p_hat[k];
        }
        if (!(total > 0.0))
            throw ValidationError("code '" + v.code + "' has zero mass under every topic");
        for (double& p : v.p_hat) p /= total;
        out.push_back(std::move(v));
    }
    return out;
}

SimilarityMatrix similarity_matrix(const std::vector<CodeTopicVector>& vectors,
                                   const ExecPolicy& exec) {
    if (vectors.size() < 2) throw ValidationError("similarity needs at least two codes");
    const std::size_t K = vectors.front().p_hat.size();
    SimilarityMatrix sim;
    sim.category = vectors.front().category;
    Matrix v(vectors.size(), K);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].p_hat.size() != K)
            throw ValidationError("code-topic vectors differ in length");
        double norm = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            v(i, k) = vectors[i].p_hat[k];
            norm += v(i, k) * v(i, k);
        }
        if (!(norm > 0.0)) throw ValidationError("code '" + vectors[i].code + "' has a zero vector");
        sim.ids.push_back(vectors[i].id);
        sim.codes.push_back(vectors[i].code);
    }
    sim.S = exec.threads > 1 ? cosine_similarity_parallel(v, exec) : cosine_similarity_serial(v);
    return sim;
}

void group_codes(SimilarityMatrix& sim, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("grouping threshold must lie in (0, 1)");
    const std::size_t n = sim.ids.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (sim.S(i, j) >= threshold) {
                const auto a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }

    std::unordered_map<std::size_t, std::vector<std::size_t>> comps;
    for (std::size_t i = 0; i < n; ++i) comps[find(i)].push_back(i);
    std::vector<std::vector<std::size_t>> groups;
    for (auto& [_, members] : comps) {
        std::sort(members.begin(), members.end(),
                  [&](std::size_t a, std::size_t b) { return sim.ids[a] < sim.ids[b]; });
        groups.push_back(std::move(members));
    }
    std::sort(groups.begin(), groups.end(), [&](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return sim.ids[a.front()] < sim.ids[b.front()];
    });

    sim.group_labels.assign(n, 0);
    sim.block_order.clear();
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t i : groups[g]) {
            sim.group_labels[i] = g;
            sim.block_order.push_back(i);
        }
}

// ----------------------------------------------------------------------------
// exports

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::ofstream create(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    return in;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double x = std::stod(s, &used);
        if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
    throw ValidationError(where + ": malformed number '" + s + "'");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    return out;
}

std::vector<std::size_t> display_order(const SimilarityMatrix& sim) {
    if (!sim.block_order.empty()) return sim.block_order;
    std::vector<std::size_t> order(sim.ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

}  // namespace

void export_topics(const TopicReport& report, const fs::path& path) {
    auto out = create(path);
    write_topics(report, out);
    finish(out, path);
}

void write_topics(const TopicReport& report, std::ostream& out) {
    out << "topic\tcategory\trank\tcode\tdescription\tprobability\n";
    for (std::size_t k = 0; k < report.topics.size(); ++k)
        for (std::size_t t = 0; t < report.categories.size(); ++t)
            for (std::size_t r = 0; r < report.topics[k][t].size(); ++r) {
                const auto& e = report.topics[k][t][r];
                out << k << '\t' << report.categories[t] << '\t' << r + 1 << '\t' << e.code << '\t'
                    << e.description << '\t' << format_double(e.probability) << '\n';
            }
}

TopicReport read_topics(const fs::path& path) {
    auto in = open(path);
    std::string line;
    std::getline(in, line);
    TopicReport report;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = path.string() + ":" + std::to_string(line_no);
        const auto f = split(line, '\t');
        if (f.size() != 6) throw ValidationError(where + ": expected 6 fields");
        const auto k = static_cast<std::size_t>(parse_double(f[0], where));
        auto it = std::find(report.categories.begin(), report.categories.end(), f[1]);
        if (it == report.categories.end()) {
            report.categories.push_back(f[1]);
            for (auto& topic : report.topics) topic.emplace_back();
            it = report.categories.end() - 1;
        }
        const auto t = static_cast<std::size_t>(it - report.categories.begin());
        if (k >= report.topics.size()) {
            report.topics.resize(k + 1,
                                 std::vector<std::vector<TopicEntry>>(report.categories.size()));
            report.K = k + 1;
        }
        // Token ids are not part of the TSV.
        report.topics[k][t].push_back({0, f[3], f[4], parse_double(f[5], where)});
    }
    return report;
}

void export_loadings(const LoadingsTable& table, const fs::path& path) {
    auto out = create(path);
    out << "doc_id";
    for (std::size_t k = 0; k < table.loadings.cols; ++k) out << "\tk" << k;
    out << '\n';
    for (std::size_t d = 0; d < table.doc_ids.size(); ++d) {
        out << table.doc_ids[d];
        for (double x : table.loadings.row(d)) out << '\t' << format_double(x);
        out << '\n';
    }
    finish(out, path);
}

LoadingsTable read_loadings(const fs::path& path) {
    auto in = open(path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header");
    const auto header = split(line, '\t');
    if (header.empty() || header[0] != "doc_id")
        throw ValidationError(path.string() + ": header must start with doc_id");
    const std::size_t K = header.size() - 1;
    LoadingsTable table;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = path.string() + ":" + std::to_string(line_no);
        const auto f = split(line, '\t');
        if (f.size() != K + 1) throw ValidationError(where + ": expected " + std::to_string(K + 1) + " fields");
        table.doc_ids.push_back(f[0]);
        for (std::size_t k = 0; k < K; ++k) values.push_back(parse_double(f[k + 1], where));
    }
    table.loadings = Matrix(table.doc_ids.size(), K);
    table.loadings.data = std::move(values);
    return table;
}

void export_cohorts(const CohortReport& report, const fs::path& path) {
    auto out = create(path);
    write_cohort_report(report, out);
    finish(out, path);
}

void write_cohort_report(const CohortReport& report, std::ostream& out) {
    out << "cohort\ttopic\tmin\tq1\tmedian\tq3\tmax\tmean\n";
    for (const auto& c : report.cohorts)
        for (std::size_t k = 0; k < c.topics.size(); ++k) {
            const auto& s = c.topics[k];
            out << c.cohort << '\t' << k << '\t' << format_double(s.min) << '\t'
                << format_double(s.q1) << '\t' << format_double(s.median) << '\t'
                << format_double(s.q3) << '\t' << format_double(s.max) << '\t'
                << format_double(s.mean) << '\n';
        }
}

void export_similarity(const SimilarityMatrix& sim, const fs::path& path) {
    const auto order = display_order(sim);
    auto out = create(path);
    out << "code";
    for (std::size_t i : order) out << ',' << csv_field(sim.codes[i]);
    out << '\n';
    for (std::size_t i : order) {
        out << csv_field(sim.codes[i]);
        for (std::size_t j : order) out << ',' << format_double(sim.S(i, j));
        out << '\n';
    }
    finish(out, path);
}

SimilarityCsv read_similarity(const fs::path& path) {
    auto in = open(path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header");
    auto header = parse_csv_line(line);
    SimilarityCsv csv;
    csv.codes.assign(header.begin() + 1, header.end());
    const std::size_t n = csv.codes.size();
    csv.S = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto where = path.string() + ":" + std::to_string(i + 2);
        if (!std::getline(in, line)) throw ValidationError(where + ": missing row");
        const auto f = parse_csv_line(line);
        if (f.size() != n + 1 || f[0] != csv.codes[i])
            throw ValidationError(where + ": row does not match header");
        for (std::size_t j = 0; j < n; ++j) csv.S(i, j) = parse_double(f[j + 1], where);
    }
    return csv;
}

void export_groups(const SimilarityMatrix& sim, const Vocabulary* vocab, const fs::path& path) {
    if (sim.group_labels.size() != sim.ids.size())
        throw ValidationError("export_groups: codes have not been grouped");
    auto out = create(path);
    out << "group_id\tcode\tdescription\n";
    for (std::size_t i : sim.block_order)
        out << sim.group_labels[i] << '\t' << sim.codes[i] << '\t'
            << (vocab ? (*vocab)[sim.ids[i]].description : std::string()) << '\n';
    finish(out, path);
}

}  // namespace mixehr
