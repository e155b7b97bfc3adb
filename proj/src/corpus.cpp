#include "debiasrag/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "debiasrag/errors.hpp"
#include "debiasrag/text.hpp"

namespace debiasrag {

namespace {

constexpr char kMagic[4] = {'D', 'B', 'R', 'G'};
constexpr std::uint16_t kFormatVersion = 1;

void warn(std::vector<std::string>* sink, const std::string& message) {
    if (sink) {
        sink->push_back(message);
    } else {
        std::cerr << "warning: " << message << "\n";
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void append_le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void append_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16_le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

} // namespace

std::string to_string(DocKind kind) {
    switch (kind) {
    case DocKind::avoid: return "avoid";
    case DocKind::normal: return "normal";
    case DocKind::fair_synth: return "fair-synth";
    }
    return "normal";
}

DocKind dockind_from_string(const std::string& s) {
    if (s == "avoid") return DocKind::avoid;
    if (s == "normal") return DocKind::normal;
    if (s == "fair-synth") return DocKind::fair_synth;
    throw ContractError("unknown document kind: " + s);
}

bool operator==(const Document& a, const Document& b) {
    return a.id == b.id && a.text == b.text && a.kind == b.kind && a.tags == b.tags &&
           a.tokens == b.tokens && a.embedding == b.embedding;
}

const Document* Repository::find(const std::string& id) const {
    auto it = std::lower_bound(documents.begin(), documents.end(), id,
                               [](const Document& d, const std::string& key) { return d.id < key; });
    if (it == documents.end() || it->id != id) return nullptr;
    return &*it;
}

bool operator==(const Repository& a, const Repository& b) {
    return a.name == b.name && a.dim == b.dim && a.documents == b.documents;
}

Repository ingest(const std::filesystem::path& path, DocKind kind, const Embedder& embedder,
                  std::vector<std::string>* warnings) {
    if (kind == DocKind::fair_synth) {
        throw ContractError("ingest: fair-synth documents are synthesized per query, not ingested");
    }

    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());

    struct Record {
        Document doc;
        int line;
    };
    std::vector<Record> records;
    std::map<std::string, std::vector<int>> id_lines;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ": malformed record at line " +
                        std::to_string(line_no) + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() ||
            !obj.contains("text") || !obj["text"].is_string()) {
            throw Error(path.string() + ": malformed record at line " + std::to_string(line_no) +
                        ": expected object with string \"id\" and \"text\"");
        }
        Document doc;
        doc.id = obj["id"].get<std::string>();
        doc.text = obj["text"].get<std::string>();
        doc.kind = kind;
        if (obj.contains("tags")) {
            if (!obj["tags"].is_array()) {
                throw Error(path.string() + ": malformed record at line " +
                            std::to_string(line_no) + ": \"tags\" must be an array");
            }
            doc.tags = obj["tags"].get<std::vector<std::string>>();
        }
        doc.tokens = tokenize(doc.text);
        id_lines[doc.id].push_back(line_no);
        records.push_back({std::move(doc), line_no});
    }

    std::string dup_report;
    for (const auto& [id, lines] : id_lines) {
        if (lines.size() < 2) continue;
        dup_report += (dup_report.empty() ? "" : "; ") + ("id \"" + id + "\" on lines ");
        for (std::size_t i = 0; i < lines.size(); ++i) {
            dup_report += (i ? "," : "") + std::to_string(lines[i]);
        }
    }
    if (!dup_report.empty()) {
        throw Error(path.string() + ": duplicate ids: " + dup_report);
    }

    Repository repo;
    repo.name = kind == DocKind::avoid ? RepoName::A : RepoName::D;
    if (records.empty()) return repo;

    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& r : records) texts.push_back(r.doc.text);
    auto vectors = embedder.embed_batch(texts);

    for (std::size_t i = 0; i < records.size(); ++i) {
        if (vectors[i].degenerate()) {
            warn(warnings, path.string() + ": line " + std::to_string(records[i].line) +
                               ": text of id \"" + records[i].doc.id +
                               "\" has no tokens; excluded from repository");
            continue;
        }
        records[i].doc.embedding = std::move(vectors[i]);
        repo.documents.push_back(std::move(records[i].doc));
        repo.dim = repo.documents.back().embedding.dim();
    }
    std::sort(repo.documents.begin(), repo.documents.end(),
              [](const Document& a, const Document& b) { return a.id < b.id; });
    return repo;
}

std::string classify_bias_tag(const std::string& text, const TagLexicon& lex) {
    if (lex.empty()) throw ContractError("classify_bias_tag: empty tag lexicon");
    std::map<std::string, int> counts; // ordered: lexicographic tie-break for free
    for (const auto& tok : tokenize(text)) {
        auto it = lex.entries.find(tok);
        if (it != lex.entries.end()) counts[it->second]++;
    }
    std::string best = "none";
    int best_count = 0;
    for (const auto& [cls, n] : counts) {
        if (n > best_count) {
            best = cls;
            best_count = n;
        }
    }
    return best;
}

TagLexicon load_tag_lexicon(const std::filesystem::path& path) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": invalid tag lexicon JSON: " + e.what());
    }
    if (!obj.is_object()) throw Error(path.string() + ": tag lexicon must be a JSON object");
    TagLexicon lex;
    for (const auto& [word, cls] : obj.items()) {
        if (!cls.is_string()) {
            throw Error(path.string() + ": class for \"" + word + "\" must be a string");
        }
        std::string key = to_lower(word);
        auto [it, inserted] = lex.entries.emplace(key, cls.get<std::string>());
        if (!inserted && it->second != cls.get<std::string>()) {
            throw Error(path.string() + ": word \"" + key + "\" mapped to two classes");
        }
    }
    return lex;
}

void save_vectors(const Repository& repo, const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, 4);
    append_le(out, kFormatVersion);
    append_le(out, static_cast<std::uint32_t>(repo.size()));
    append_le(out, static_cast<std::uint32_t>(repo.dim));

    for (const auto& doc : repo.documents) {
        if (doc.kind == DocKind::fair_synth) {
            throw ContractError("save_vectors: fair-synth documents are never persisted (id \"" +
                                doc.id + "\")");
        }
        if (doc.embedding.dim() != repo.dim) {
            throw ContractError("save_vectors: document \"" + doc.id +
                                "\" has dim " + std::to_string(doc.embedding.dim()) +
                                ", repository dim is " + std::to_string(repo.dim));
        }
        const auto* bytes = reinterpret_cast<const char*>(doc.embedding.values.data());
        out.append(bytes, doc.embedding.values.size() * sizeof(float));
    }
    for (const auto& doc : repo.documents) {
        nlohmann::json meta{{"id", doc.id},
                            {"text", doc.text},
                            {"kind", to_string(doc.kind)},
                            {"tags", doc.tags}};
        out += meta.dump();
        out.push_back('\n');
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot write " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw Error("write failed for " + path.string());
}

Repository load_vectors(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());

    if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic, expected \"DBRG\"", 0);
    }
    if (data.size() < 14) {
        throw FormatError(path.string() + ": truncated header", data.size());
    }
    const std::uint16_t version = read_u16_le(bytes + 4);
    if (version != kFormatVersion) {
        throw FormatError(path.string() + ": unsupported format version " +
                              std::to_string(version),
                          4);
    }
    const std::uint32_t count = read_u32_le(bytes + 6);
    const std::uint32_t dim = read_u32_le(bytes + 10);

    const std::size_t vec_bytes =
        static_cast<std::size_t>(count) * static_cast<std::size_t>(dim) * sizeof(float);
    const std::size_t need = 14 + vec_bytes;
    if (data.size() < need) {
        throw FormatError(path.string() + ": truncated vector block: expected " +
                              std::to_string(need) + " bytes before footer, got " +
                              std::to_string(data.size()),
                          data.size());
    }

    Repository repo;
    repo.dim = dim;
    repo.documents.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& vec = repo.documents[i].embedding.values;
        vec.resize(dim);
        std::memcpy(vec.data(), data.data() + 14 + static_cast<std::size_t>(i) * dim * sizeof(float),
                    dim * sizeof(float));
    }

    // Footer: one metadata record per row, in row order.
    std::istringstream footer(data.substr(need));
    std::string line;
    std::uint32_t row = 0;
    std::size_t offset = need;
    while (std::getline(footer, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (row >= count) {
            throw FormatError(path.string() + ": footer has more records than header count " +
                                  std::to_string(count),
                              line_offset);
        }
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ": invalid footer record: " + e.what(), line_offset);
        }
        Document& doc = repo.documents[row];
        doc.id = meta.at("id").get<std::string>();
        doc.text = meta.at("text").get<std::string>();
        doc.kind = dockind_from_string(meta.at("kind").get<std::string>());
        doc.tags = meta.at("tags").get<std::vector<std::string>>();
        doc.tokens = tokenize(doc.text);
        ++row;
    }
    if (row != count) {
        throw FormatError(path.string() + ": footer has " + std::to_string(row) +
                              " records, header count is " + std::to_string(count),
                          data.size());
    }
    std::sort(repo.documents.begin(), repo.documents.end(),
              [](const Document& a, const Document& b) { return a.id < b.id; });

    repo.name = RepoName::D;
    for (const auto& doc : repo.documents) {
        if (doc.kind == DocKind::avoid) {
            repo.name = RepoName::A;
            break;
        }
    }
    return repo;
}

} // namespace debiasrag
