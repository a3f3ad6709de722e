#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mixehr/corpus.hpp"
#include "mixehr/inference.hpp"
#include "mixehr/kernels.hpp"

namespace mixehr {

// Vocabularies with generated codes ("<cat>:<id>") for models that were
// saved without their code lists.
std::vector<Vocabulary> placeholder_vocabs(const ModelState& model);

// ----------------------------------------------------------------------------
// Topic reports

struct TopicEntry {
    TokenId id;
    std::string code;
    std::string description;
    double probability;
};

struct TopicReport {
    std::size_t K = 0;
    std::vector<std::string> categories;
    std::vector<std::vector<std::vector<TopicEntry>>> topics;  // [k][t], ranked
    bool truncated = false;  // top_n exceeded some V_t
};

// Top codes per (topic, category) by expected probability, ties broken by
// ascending token id.
TopicReport topic_report(const ModelState& model, const std::vector<Vocabulary>& vocabs,
                         std::size_t top_n);

// ----------------------------------------------------------------------------
// Patient loadings and cohorts

struct LoadingsTable {
    std::vector<std::string> doc_ids;
    Matrix loadings;                     // D x K, rows on the simplex
    std::vector<std::string> empty_docs;  // given uniform loadings
};

// Fresh inference per document; documents with no codes get 1/K.
LoadingsTable infer_loadings(const ModelState& model, const MultiCorpus& corpus,
                             const EStepOptions& opts = {}, const ExecPolicy& exec = {});

struct TopicSummary {
    double min, q1, median, q3, max, mean;
};

// Quartiles use linear interpolation between order statistics.
TopicSummary summarize(std::vector<double> values);

struct CohortSummary {
    std::string cohort;
    std::size_t patients = 0;
    std::vector<TopicSummary> topics;
    std::size_t dominant_topic = 0;  // argmax of median loading, lowest k on ties
};

struct CohortReport {
    std::vector<CohortSummary> cohorts;  // in order of first appearance
};

CohortReport cohort_report(const LoadingsTable& loadings,
                           const std::vector<CohortAssignment>& cohorts);

// ----------------------------------------------------------------------------
// Code similarity

enum class CodeVectorMode {
    Uniform,   // p(k | code) with a uniform topic prior
    Weighted,  // topic prior proportional to the topic's token mass in lambda
};

CodeVectorMode parse_code_vector_mode(const std::string& s);

struct CodeTopicVector {
    std::size_t category;
    TokenId id;
    std::string code;
    std::vector<double> p_hat;
};

std::vector<CodeTopicVector> code_topic_vectors(const ModelState& model, std::size_t category,
                                                const Vocabulary* vocab = nullptr,
                                                CodeVectorMode mode = CodeVectorMode::Uniform);

struct SimilarityMatrix {
    std::size_t category = 0;
    std::vector<TokenId> ids;
    std::vector<std::string> codes;
    Matrix S;
    std::vector<std::size_t> group_labels;  // filled by group_codes
    std::vector<std::size_t> block_order;   // indices into ids/codes
};

SimilarityMatrix similarity_matrix(const std::vector<CodeTopicVector>& vectors,
                                   const ExecPolicy& exec = {});

// Connected components of {(i, j) : S_ij >= threshold}. Group 0 is the
// largest; ties and members ordered by token id.
void group_codes(SimilarityMatrix& sim, double threshold);

// ----------------------------------------------------------------------------
// Exports

std::string format_double(double x);  // 17 significant digits

void write_topics(const TopicReport& report, std::ostream& out);
void export_topics(const TopicReport& report, const std::filesystem::path& path);
TopicReport read_topics(const std::filesystem::path& path);

void export_loadings(const LoadingsTable& table, const std::filesystem::path& path);
LoadingsTable read_loadings(const std::filesystem::path& path);

void write_cohort_report(const CohortReport& report, std::ostream& out);
void export_cohorts(const CohortReport& report, const std::filesystem::path& path);

// CSV: "code" then the codes in block order as the header; one row per code.
void export_similarity(const SimilarityMatrix& sim, const std::filesystem::path& path);

struct SimilarityCsv {
    std::vector<std::string> codes;
    Matrix S;
};
SimilarityCsv read_similarity(const std::filesystem::path& path);

void export_groups(const SimilarityMatrix& sim, const Vocabulary* vocab,
                   const std::filesystem::path& path);

}  // namespace mixehr
