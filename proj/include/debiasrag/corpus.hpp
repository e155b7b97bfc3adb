#ifndef DEBIASRAG_CORPUS_HPP
#define DEBIASRAG_CORPUS_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "debiasrag/embedding.hpp"

namespace debiasrag {

enum class DocKind { avoid, normal, fair_synth };

std::string to_string(DocKind kind);
DocKind dockind_from_string(const std::string& s);

struct Document {
    std::string id;
    std::string text;
    std::vector<std::string> tokens; // deterministic tokenization of text
    DocKind kind = DocKind::normal;
    std::vector<std::string> tags;
    EmbeddingVector embedding;
};

bool operator==(const Document& a, const Document& b);

enum class RepoName { A, D };

// Immutable-after-ingest document store. Iteration order is ascending id.
struct Repository {
    RepoName name = RepoName::D;
    std::vector<Document> documents;
    std::size_t dim = 0;

    std::size_t size() const { return documents.size(); }
    bool empty() const { return documents.empty(); }
    const Document* find(const std::string& id) const;
};

bool operator==(const Repository& a, const Repository& b);

// Word -> bias-class lookup for tag classification.
struct TagLexicon {
    std::map<std::string, std::string> entries;

    bool empty() const { return entries.empty(); }
};

struct Query {
    std::string text;
    EmbeddingVector embedding;
    std::string tag = "none";
};

// Reads a JSONL document file ({"id","text","tags"} per line), embeds every
// record, and returns a repository sorted by id. Texts that tokenize to
// nothing are excluded with a warning appended to `warnings` (or stderr when
// null). kind must be avoid or normal.
Repository ingest(const std::filesystem::path& path, DocKind kind, const Embedder& embedder,
                  std::vector<std::string>* warnings = nullptr);

// Majority bias class of the lexicon words appearing in `text`; ties break
// lexicographically, no hits -> "none".
std::string classify_bias_tag(const std::string& text, const TagLexicon& lex);

TagLexicon load_tag_lexicon(const std::filesystem::path& path);

// Binary vector cache: magic "DBRG", version u16 LE, count u32 LE, dim u32
// LE, count*dim float32 LE row-major, then a JSONL footer of metadata
// records in row order. Round trips are bit-exact for embeddings.
void save_vectors(const Repository& repo, const std::filesystem::path& path);
Repository load_vectors(const std::filesystem::path& path);

} // namespace debiasrag

#endif
