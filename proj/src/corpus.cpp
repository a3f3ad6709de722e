#include "mixehr/corpus.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mixehr/error.hpp"

namespace mixehr {

namespace fs = std::filesystem;
using nlohmann::json;

TokenId Vocabulary::add(std::string code, std::string description) {
    const auto id = static_cast<TokenId>(entries_.size());
    auto [it, inserted] = index_.emplace(code, id);
    if (!inserted)
        throw ValidationError("duplicate code '" + code + "' in category '" + category_ + "'");
    entries_.push_back({std::move(code), std::move(description)});
    return id;
}

std::optional<TokenId> Vocabulary::find(const std::string& code) const {
    auto it = index_.find(code);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::uint64_t Document::category_total(std::size_t t) const {
    std::uint64_t n = 0;
    for (const auto& tc : cats[t]) n += tc.count;
    return n;
}

std::uint64_t Document::total() const {
    std::uint64_t n = 0;
    for (std::size_t t = 0; t < cats.size(); ++t) n += category_total(t);
    return n;
}

std::size_t Document::nonempty_categories() const {
    return static_cast<std::size_t>(
        std::count_if(cats.begin(), cats.end(), [](const auto& c) { return !c.empty(); }));
}

std::vector<std::size_t> MultiCorpus::vocab_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& v : vocabs) out.push_back(v.size());
    return out;
}

std::vector<std::string> MultiCorpus::category_names() const {
    std::vector<std::string> out;
    for (const auto& v : vocabs) out.push_back(v.category());
    return out;
}

// ---------------------------------------------------------------------------
// vocabularies

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::ifstream open_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    return in;
}

std::ofstream create_text(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

bool getline_lf(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

std::string category_from_path(const fs::path& path) {
    std::string stem = path.stem().string();
    constexpr std::string_view prefix = "vocab_";
    if (stem.starts_with(prefix)) stem.erase(0, prefix.size());
    return stem;
}

}  // namespace

Vocabulary load_vocab(const fs::path& path) { return load_vocab(path, category_from_path(path)); }

Vocabulary load_vocab(const fs::path& path, std::string category) {
    auto in = open_text(path);
    Vocabulary vocab(std::move(category));
    std::string line;
    std::size_t line_no = 0;
    while (getline_lf(in, line)) {
        ++line_no;
        const auto where = path.string() + ":" + std::to_string(line_no);
        auto fields = split_tabs(line);
        if (fields.size() != 3)
            throw ValidationError(where + ": expected 3 tab-separated fields, got " +
                                  std::to_string(fields.size()));
        std::size_t id = 0;
        std::size_t used = 0;
        try {
            id = std::stoul(fields[0], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != fields[0].size())
            throw ValidationError(where + ": malformed token_id '" + fields[0] + "'");
        if (id != line_no - 1)
            throw ValidationError(where + ": token_id " + fields[0] + " does not equal line index " +
                                  std::to_string(line_no - 1));
        if (fields[1].empty()) throw ValidationError(where + ": empty code");
        if (vocab.find(fields[1]))
            throw ValidationError(where + ": duplicate code '" + fields[1] + "'");
        vocab.add(std::move(fields[1]), std::move(fields[2]));
    }
    return vocab;
}

void write_vocab(const fs::path& path, const Vocabulary& vocab) {
    auto out = create_text(path);
    for (std::size_t i = 0; i < vocab.size(); ++i)
        out << i << '\t' << vocab[static_cast<TokenId>(i)].code << '\t'
            << vocab[static_cast<TokenId>(i)].description << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Vocabulary> load_vocab_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::string> names;
    const auto order = dir / "categories.txt";
    if (fs::exists(order)) {
        auto in = open_text(order);
        std::string line;
        while (getline_lf(in, line))
            if (!line.empty()) names.push_back(line);
    } else {
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (e.is_regular_file() && name.starts_with("vocab_") && name.ends_with(".tsv"))
                names.push_back(category_from_path(e.path()));
        }
        std::sort(names.begin(), names.end());
    }
    if (names.empty()) throw ValidationError("no vocabularies found in " + dir.string());
    std::vector<Vocabulary> vocabs;
    for (const auto& n : names) vocabs.push_back(load_vocab(dir / ("vocab_" + n + ".tsv"), n));
    return vocabs;
}

void write_vocab_dir(const fs::path& dir, const std::vector<Vocabulary>& vocabs) {
    fs::create_directories(dir);
    auto out = create_text(dir / "categories.txt");
    for (const auto& v : vocabs) {
        out << v.category() << '\n';
        write_vocab(dir / ("vocab_" + v.category() + ".tsv"), v);
    }
}

// ---------------------------------------------------------------------------
// documents

void validate_document(const Document& doc, const std::vector<std::size_t>& vocab_sizes) {
    if (doc.cats.size() != vocab_sizes.size())
        throw ValidationError("document '" + doc.id + "': has " + std::to_string(doc.cats.size()) +
                              " categories, expected " + std::to_string(vocab_sizes.size()));
    for (std::size_t t = 0; t < vocab_sizes.size(); ++t) {
        std::vector<TokenId> seen;
        seen.reserve(doc.cats[t].size());
        for (const auto& tc : doc.cats[t]) {
            if (tc.id >= vocab_sizes[t])
                throw ValidationError("document '" + doc.id + "': category " + std::to_string(t) +
                                      " token_id " + std::to_string(tc.id) + " >= V=" +
                                      std::to_string(vocab_sizes[t]));
            if (tc.count == 0)
                throw ValidationError("document '" + doc.id + "': category " + std::to_string(t) +
                                      " token_id " + std::to_string(tc.id) + " has zero count");
            seen.push_back(tc.id);
        }
        std::sort(seen.begin(), seen.end());
        if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
            throw ValidationError("document '" + doc.id + "': category " + std::to_string(t) +
                                  " repeats a token_id");
    }
}

Document parse_document(const std::string& line, const std::vector<Vocabulary>& vocabs,
                        std::size_t line_no) {
    const auto where = "line " + std::to_string(line_no);
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ValidationError(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
        throw ValidationError(where + ": record needs a string field 'id'");

    Document doc;
    doc.id = j["id"].get<std::string>();
    doc.cats.resize(vocabs.size());
    const auto field_error = [&](const std::string& field, const std::string& what) {
        return ValidationError(where + ": document '" + doc.id + "' field '" + field + "': " +
                               what);
    };

    if (!j.contains("cats")) return doc;
    const auto& cats = j["cats"];
    if (!cats.is_object()) throw field_error("cats", "expected an object");

    for (const auto& [name, tokens] : cats.items()) {
        auto it = std::find_if(vocabs.begin(), vocabs.end(),
                               [&](const Vocabulary& v) { return v.category() == name; });
        if (it == vocabs.end()) throw field_error("cats." + name, "unknown category");
        const auto t = static_cast<std::size_t>(it - vocabs.begin());
        if (!tokens.is_array()) throw field_error("cats." + name, "expected an array");
        for (const auto& pair : tokens) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
                !pair[1].is_number_integer())
                throw field_error("cats." + name, "entries must be [token_id, count]");
            const auto id = pair[0].get<std::int64_t>();
            const auto count = pair[1].get<std::int64_t>();
            if (id < 0 || static_cast<std::uint64_t>(id) >= it->size())
                throw field_error("cats." + name, "token_id " + std::to_string(id) +
                                                      " out of range [0, " +
                                                      std::to_string(it->size()) + ")");
            if (count <= 0 || count > std::numeric_limits<std::uint32_t>::max())
                throw field_error("cats." + name,
                                  "count " + std::to_string(count) + " is not a positive integer");
            doc.cats[t].push_back({static_cast<TokenId>(id), static_cast<std::uint32_t>(count)});
        }
    }
    std::vector<std::size_t> sizes;
    for (const auto& v : vocabs) sizes.push_back(v.size());
    try {
        validate_document(doc, sizes);
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    }
    return doc;
}

std::string format_document(const Document& doc, const std::vector<Vocabulary>& vocabs) {
    std::string out = "{\"id\":" + json(doc.id).dump() + ",\"cats\":{";
    bool first_cat = true;
    for (std::size_t t = 0; t < doc.cats.size(); ++t) {
        if (doc.cats[t].empty()) continue;
        if (!first_cat) out += ',';
        first_cat = false;
        out += json(vocabs[t].category()).dump() + ":[";
        for (std::size_t i = 0; i < doc.cats[t].size(); ++i) {
            if (i) out += ',';
            out += '[' + std::to_string(doc.cats[t][i].id) + ',' +
                   std::to_string(doc.cats[t][i].count) + ']';
        }
        out += ']';
    }
    out += "}}";
    return out;
}

CorpusStream::CorpusStream(fs::path path, std::vector<Vocabulary> vocabs)
    : path_(std::move(path)), vocabs_(std::move(vocabs)), in_(path_) {
    if (!in_) throw IoError("cannot open: " + path_.string());
}

std::optional<Document> CorpusStream::next() {
    std::string line;
    while (getline_lf(in_, line)) {
        ++line_no_;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            return parse_document(line, vocabs_, line_no_);
        } catch (const ValidationError& e) {
            throw ValidationError(path_.string() + ": " + e.what());
        }
    }
    if (in_.bad()) throw IoError("read failed: " + path_.string());
    return std::nullopt;
}

void CorpusStream::reset() {
    in_.clear();
    in_.seekg(0);
    line_no_ = 0;
}

CorpusStream open_corpus(const fs::path& path, std::vector<Vocabulary> vocabs) {
    return CorpusStream(path, std::move(vocabs));
}

MultiCorpus load_corpus(const fs::path& path, std::vector<Vocabulary> vocabs) {
    auto stream = open_corpus(path, std::move(vocabs));
    MultiCorpus corpus;
    corpus.vocabs = stream.vocabs();
    std::unordered_set<std::string> ids;
    while (auto doc = stream.next()) {
        if (!ids.insert(doc->id).second)
            throw ValidationError(path.string() + ": line " + std::to_string(stream.line_number()) +
                                  ": duplicate document id '" + doc->id + "'");
        corpus.docs.push_back(std::move(*doc));
    }
    return corpus;
}

void write_corpus(const fs::path& path, const MultiCorpus& corpus) {
    auto out = create_text(path);
    for (const auto& doc : corpus.docs) out << format_document(doc, corpus.vocabs) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::pair<MultiCorpus, MultiCorpus> split_holdout(const MultiCorpus& corpus, double ratio,
                                                  std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ValidationError("holdout ratio must lie in (0, 1), got " + std::to_string(ratio));
    if (corpus.docs.empty()) throw ValidationError("cannot split an empty corpus");

    std::mt19937_64 rng(seed);
    MultiCorpus observed{corpus.vocabs, {}};
    MultiCorpus held{corpus.vocabs, {}};
    observed.docs.reserve(corpus.size());
    held.docs.reserve(corpus.size());
    for (const auto& doc : corpus.docs) {
        Document obs{doc.id, std::vector<std::vector<TokenCount>>(doc.cats.size())};
        Document hld{doc.id, std::vector<std::vector<TokenCount>>(doc.cats.size())};
        for (std::size_t t = 0; t < doc.cats.size(); ++t) {
            for (const auto& tc : doc.cats[t]) {
                // Number of held occurrences out of tc.count independent draws.
                std::binomial_distribution<std::uint32_t> draw(tc.count, ratio);
                const auto h = draw(rng);
                if (h > 0) hld.cats[t].push_back({tc.id, h});
                if (h < tc.count) obs.cats[t].push_back({tc.id, tc.count - h});
            }
        }
        observed.docs.push_back(std::move(obs));
        held.docs.push_back(std::move(hld));
    }
    return {std::move(observed), std::move(held)};
}

// ---------------------------------------------------------------------------
// cohorts

std::vector<CohortAssignment> load_cohorts(const fs::path& path) {
    auto in = open_text(path);
    std::vector<CohortAssignment> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (getline_lf(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(line_no);
        auto fields = split_tabs(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            throw ValidationError(where + ": expected doc_id<TAB>cohort_name");
        if (!seen.insert(fields[0]).second)
            throw ValidationError(where + ": doc_id '" + fields[0] + "' assigned twice");
        out.push_back({std::move(fields[0]), std::move(fields[1])});
    }
    return out;
}

void write_cohorts(const fs::path& path, const std::vector<CohortAssignment>& cohorts) {
    auto out = create_text(path);
    for (const auto& c : cohorts) out << c.doc_id << '\t' << c.cohort << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mixehr
