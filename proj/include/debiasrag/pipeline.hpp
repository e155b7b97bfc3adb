#ifndef DEBIASRAG_PIPELINE_HPP
#define DEBIASRAG_PIPELINE_HPP

#include <mutex>
#include <string>
#include <vector>

#include "debiasrag/counterfactual.hpp"
#include "debiasrag/rerank.hpp"
#include "debiasrag/retrieval.hpp"

namespace debiasrag {

enum class GenClientKind { null, remote };

// Pluggable generation backend. The null client echoes the prompt (test
// mode); the remote client speaks POST {endpoint}/generate.
struct GenerationClient {
    GenClientKind kind = GenClientKind::null;
    std::string endpoint;
    int max_tokens = 256;
    int max_attempts = 3;

    std::string generate(const std::string& prompt) const;
};

struct StageTimings {
    double embed_ms = 0.0;
    double route_ms = 0.0;
    double synth_ms = 0.0;
    double retrieve_ms = 0.0;
    double rerank_ms = 0.0;
    double generate_ms = 0.0;
};

struct PipelineResult {
    Query query;
    std::vector<std::string> avoid_ids; // A_q, similarity order
    std::vector<FairCandidate> fair;    // F~_q
    int pool_pre_filter = 0;
    int pool_post_filter = 0;
    std::vector<Candidate> selected;    // C_q, rank order
    std::string prompt;
    std::string generation;
    RerankTrace trace;
    StageTimings timings;

    nlohmann::json to_json() const;
};

struct PipelineConfig {
    RetrievalParams retrieval;
    RerankerState reranker; // initial optimizer state
    bool route_by_tag = false;
};

// Exact prompt template; contexts appear in C_q rank order.
std::string assemble_prompt(const Query& q, const std::vector<Candidate>& selected);

// End-to-end per-query flow: avoid routing, fair synthesis, base retrieval,
// pool building, filtering, normalization, optional streaming theta update,
// final selection, prompt assembly, and generation. Repositories are shared
// read-only across queries; theta updates are serialized.
class Pipeline {
public:
    Pipeline(Embedder embedder, Repository avoid_repo, Repository normal_repo,
             AttributeLexicon lexicon, FluencyScorer scorer, TagLexicon tag_lexicon,
             PipelineConfig config, GenerationClient generation);

    PipelineResult answer_query(const std::string& text, bool learn);

    RerankerState state() const;
    void set_state(RerankerState state);

    const Repository& avoid_repo() const { return avoid_repo_; }
    const Repository& normal_repo() const { return normal_repo_; }
    const PipelineConfig& config() const { return config_; }

private:
    Embedder embedder_;
    Repository avoid_repo_;
    Repository normal_repo_;
    AttributeLexicon lexicon_;
    FluencyScorer scorer_;
    TagLexicon tag_lexicon_;
    PipelineConfig config_;
    GenerationClient generation_;

    mutable std::mutex state_mutex_;
    RerankerState state_;
};

} // namespace debiasrag

#endif
