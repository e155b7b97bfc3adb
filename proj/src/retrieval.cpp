#include "debiasrag/retrieval.hpp"

#include <algorithm>
#include <unordered_set>

#include "debiasrag/errors.hpp"

namespace debiasrag {

void RetrievalParams::validate() const {
    if (k_avoid < 1) throw ContractError("k_avoid must be >= 1");
    if (k_normal < 0) throw ContractError("k_normal must be >= 0");
}

TopKResult top_k(const EmbeddingVector& query_vec, const Repository& repo, int k) {
    if (k < 1) throw ContractError("top_k: k must be >= 1");
    TopKResult result;
    if (repo.empty()) {
        result.truncated = true;
        return result;
    }
    if (repo.dim != query_vec.dim()) {
        throw ContractError("top_k: repository dim " + std::to_string(repo.dim) +
                            " does not match query dim " + std::to_string(query_vec.dim()));
    }

    result.hits.reserve(repo.size());
    for (const auto& doc : repo.documents) {
        result.hits.push_back({&doc, cosine(query_vec, doc.embedding)});
    }
    std::sort(result.hits.begin(), result.hits.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.doc->id < b.doc->id;
    });
    if (result.hits.size() > static_cast<std::size_t>(k)) {
        result.hits.resize(static_cast<std::size_t>(k));
    } else if (result.hits.size() < static_cast<std::size_t>(k)) {
        result.truncated = true;
    }
    return result;
}

TopKResult route_avoid(const Query& q, const Repository& avoid_repo,
                       const RetrievalParams& params) {
    params.validate();
    return top_k(q.embedding, avoid_repo, params.k_avoid);
}

CandidatePool build_pool(const Query& q, const std::vector<Document>& normal_docs,
                         const std::vector<Document>& fair_docs,
                         std::vector<Document> avoid_set) {
    if (normal_docs.empty() && fair_docs.empty()) {
        throw EmptyPoolError("build_pool: both candidate sources are empty, nothing to rerank");
    }

    CandidatePool pool;
    pool.query = q;
    pool.avoid_set = std::move(avoid_set);

    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> fair_texts;
    for (const auto& doc : fair_docs) fair_texts.insert(doc.text);

    auto add = [&](const Document& doc) {
        if (doc.kind == DocKind::avoid) {
            throw ContractError("build_pool: avoid-kind document \"" + doc.id +
                                "\" cannot join the candidate pool");
        }
        if (!ids.insert(doc.id).second) {
            throw ContractError("build_pool: duplicate candidate id \"" + doc.id + "\"");
        }
        Candidate c;
        c.doc = doc;
        pool.members.push_back(std::move(c));
    };

    for (const auto& doc : normal_docs) {
        if (fair_texts.count(doc.text)) continue; // duplicate text: keep the fair copy
        add(doc);
    }
    for (const auto& doc : fair_docs) add(doc);
    return pool;
}

} // namespace debiasrag
