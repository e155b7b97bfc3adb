#ifndef DEBIASRAG_RETRIEVAL_HPP
#define DEBIASRAG_RETRIEVAL_HPP

#include <limits>
#include <string>
#include <vector>

#include "debiasrag/corpus.hpp"

namespace debiasrag {

struct RetrievalParams {
    int k_avoid = 5;
    int k_normal = 5; // 0 = document-free scenario

    void validate() const;
};

struct ScoredDoc {
    const Document* doc = nullptr;
    double similarity = 0.0;
};

struct TopKResult {
    std::vector<ScoredDoc> hits; // descending similarity, ties by ascending id
    bool truncated = false;      // repository had fewer than k documents
};

// Exact brute-force top-k cosine search over a repository.
TopKResult top_k(const EmbeddingVector& query_vec, const Repository& repo, int k);

// Top k_avoid bias triggers most similar to the query.
TopKResult route_avoid(const Query& q, const Repository& avoid_repo,
                       const RetrievalParams& params);

// A pooled document annotated with raw and normalized reranking signals.
// Raw and normalized scores are NaN until the rerank stage fills them.
struct Candidate {
    Document doc;
    double s_q = std::numeric_limits<double>::quiet_NaN();      // query relevance
    double s_a = std::numeric_limits<double>::quiet_NaN();      // distance from avoid
    double max_avoid_sim = std::numeric_limits<double>::quiet_NaN();
    double s_q_norm = std::numeric_limits<double>::quiet_NaN();
    double s_a_norm = std::numeric_limits<double>::quiet_NaN();
};

struct CandidatePool {
    Query query;
    std::vector<Candidate> members;   // normal candidates first, then fair-synth
    std::vector<Document> avoid_set;  // the A_q this pool was built against

    std::size_t size() const { return members.size(); }
    bool empty() const { return members.empty(); }
};

// Union of the normal candidates and the synthesized fair subset. Exact
// duplicate texts are deduplicated keeping the fair-synth copy. Throws
// EmptyPoolError when both inputs are empty.
CandidatePool build_pool(const Query& q, const std::vector<Document>& normal_docs,
                         const std::vector<Document>& fair_docs,
                         std::vector<Document> avoid_set);

} // namespace debiasrag

#endif
