#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mixehr {

using TokenId = std::uint32_t;

struct VocabEntry {
    std::string code;
    std::string description;
};

// One data category's code list (diagnoses, medications, ...). The index of
// an entry is the token id used by documents and model matrices.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::string category) : category_(std::move(category)) {}

    // Throws ValidationError on a duplicate code.
    TokenId add(std::string code, std::string description = {});

    const std::string& category() const { return category_; }
    std::size_t size() const { return entries_.size(); }
    const VocabEntry& operator[](TokenId id) const { return entries_[id]; }
    const std::vector<VocabEntry>& entries() const { return entries_; }
    std::optional<TokenId> find(const std::string& code) const;

private:
    std::string category_;
    std::vector<VocabEntry> entries_;
    std::unordered_map<std::string, TokenId> index_;
};

struct TokenCount {
    TokenId id;
    std::uint32_t count;

    friend bool operator==(const TokenCount&, const TokenCount&) = default;
};

// A patient: one sparse bag of codes per category. Categories are indexed
// in vocabulary order; an empty vector means no codes in that category.
struct Document {
    std::string id;
    std::vector<std::vector<TokenCount>> cats;

    std::uint64_t category_total(std::size_t t) const;
    std::uint64_t total() const;
    std::size_t nonempty_categories() const;
    bool empty() const { return total() == 0; }

    friend bool operator==(const Document&, const Document&) = default;
};

struct MultiCorpus {
    std::vector<Vocabulary> vocabs;
    std::vector<Document> docs;

    std::size_t num_categories() const { return vocabs.size(); }
    std::size_t size() const { return docs.size(); }
    std::vector<std::size_t> vocab_sizes() const;
    std::vector<std::string> category_names() const;
};

struct CohortAssignment {
    std::string doc_id;
    std::string cohort;

    friend bool operator==(const CohortAssignment&, const CohortAssignment&) = default;
};

// Vocabulary TSV: token_id<TAB>code<TAB>description, token_id == line index.
// The category name defaults to the file stem with any "vocab_" prefix removed.
Vocabulary load_vocab(const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path, std::string category);
void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab);

// A vocabulary directory holds vocab_<cat>.tsv files; categories.txt, when
// present, fixes the category order (one name per line), otherwise names
// are sorted.
std::vector<Vocabulary> load_vocab_dir(const std::filesystem::path& dir);
void write_vocab_dir(const std::filesystem::path& dir, const std::vector<Vocabulary>& vocabs);

// Corpus JSONL record codec.
Document parse_document(const std::string& line, const std::vector<Vocabulary>& vocabs,
                        std::size_t line_no = 0);
std::string format_document(const Document& doc, const std::vector<Vocabulary>& vocabs);

// Throws ValidationError naming the document and field on the first problem.
void validate_document(const Document& doc, const std::vector<std::size_t>& vocab_sizes);

// Lazily parsed corpus file. Validation errors surface when the offending
// record is read. Each stream is an independent cursor.
class CorpusStream {
public:
    CorpusStream(std::filesystem::path path, std::vector<Vocabulary> vocabs);

    std::optional<Document> next();
    void reset();
    std::size_t line_number() const { return line_no_; }
    const std::vector<Vocabulary>& vocabs() const { return vocabs_; }

private:
    std::filesystem::path path_;
    std::vector<Vocabulary> vocabs_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

CorpusStream open_corpus(const std::filesystem::path& path, std::vector<Vocabulary> vocabs);
MultiCorpus load_corpus(const std::filesystem::path& path, std::vector<Vocabulary> vocabs);
void write_corpus(const std::filesystem::path& path, const MultiCorpus& corpus);

// Document-completion split. Every token occurrence goes to the held half
// with probability `ratio`, otherwise to the observed half. Both halves keep
// every doc id in the original order.
std::pair<MultiCorpus, MultiCorpus> split_holdout(const MultiCorpus& corpus, double ratio,
                                                  std::uint64_t seed);

// Cohort TSV: doc_id<TAB>cohort_name, no header.
std::vector<CohortAssignment> load_cohorts(const std::filesystem::path& path);
void write_cohorts(const std::filesystem::path& path,
                   const std::vector<CohortAssignment>& cohorts);

}  // namespace mixehr
