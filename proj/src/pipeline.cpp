#include "debiasrag/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>

#include "debiasrag/errors.hpp"
#include "debiasrag/http.hpp"
#include "debiasrag/text.hpp"

namespace debiasrag {

namespace {

class StageClock {
public:
    StageClock() : start_(std::chrono::steady_clock::now()) {}

    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - start_).count();
        start_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace

std::string GenerationClient::generate(const std::string& prompt) const {
    if (kind == GenClientKind::null) return prompt; // echo, test mode
    nlohmann::json res = http::post_json(endpoint, "/generate",
                                         nlohmann::json{{"prompt", prompt},
                                                        {"max_tokens", max_tokens}},
                                         max_attempts, "generate");
    if (!res.contains("text") || !res["text"].is_string()) {
        throw ContractError("generate: response missing string \"text\"");
    }
    return res["text"].get<std::string>();
}

std::string assemble_prompt(const Query& q, const std::vector<Candidate>& selected) {
    std::string out =
        "Use the following context to answer. Treat all demographic groups equally.\n"
        "Context:\n";
    for (const auto& c : selected) {
        out += "- " + c.doc.text + "\n";
    }
    out += "Question: " + q.text + "\nAnswer:";
    return out;
}

nlohmann::json PipelineResult::to_json() const {
    nlohmann::json fair_json = nlohmann::json::array();
    for (const auto& f : fair) {
        fair_json.push_back({{"source_id", f.source_id},
                             {"text", f.text},
                             {"perplexity", f.perplexity},
                             {"variant_index", f.variant_index}});
    }
    nlohmann::json selected_json = nlohmann::json::array();
    for (const auto& c : selected) {
        selected_json.push_back({{"id", c.doc.id},
                                 {"kind", to_string(c.doc.kind)},
                                 {"text", c.doc.text},
                                 {"s_q_norm", c.s_q_norm},
                                 {"s_a_norm", c.s_a_norm}});
    }
    return nlohmann::json{{"query", query.text},
                          {"tag", query.tag},
                          {"avoid_ids", avoid_ids},
                          {"fair", fair_json},
                          {"pool_pre_filter", pool_pre_filter},
                          {"pool_post_filter", pool_post_filter},
                          {"selected", selected_json},
                          {"prompt", prompt},
                          {"generation", generation}};
}

Pipeline::Pipeline(Embedder embedder, Repository avoid_repo, Repository normal_repo,
                   AttributeLexicon lexicon, FluencyScorer scorer, TagLexicon tag_lexicon,
                   PipelineConfig config, GenerationClient generation)
    : embedder_(std::move(embedder)),
      avoid_repo_(std::move(avoid_repo)),
      normal_repo_(std::move(normal_repo)),
      lexicon_(std::move(lexicon)),
      scorer_(std::move(scorer)),
      tag_lexicon_(std::move(tag_lexicon)),
      config_(std::move(config)),
      generation_(std::move(generation)),
      state_(config_.reranker) {
    config_.retrieval.validate();
    state_.validate();
}

RerankerState Pipeline::state() const {
    std::lock_guard lock(state_mutex_);
    return state_;
}

void Pipeline::set_state(RerankerState state) {
    state.validate();
    std::lock_guard lock(state_mutex_);
    state_ = std::move(state);
}

PipelineResult Pipeline::answer_query(const std::string& text, bool learn) {
    if (avoid_repo_.empty()) {
        throw ContractError("answer_query: the avoid repository is required and empty");
    }

    PipelineResult result;
    StageClock clock;

    // Embed and tag the query.
    result.query.text = text;
    result.query.embedding = embedder_.embed(text);
    if (result.query.embedding.degenerate()) {
        throw ContractError("answer_query: query text has no tokens");
    }
    result.query.tag =
        tag_lexicon_.empty() ? "none" : classify_bias_tag(text, tag_lexicon_);
    result.timings.embed_ms = clock.lap_ms();

    // Query-specific avoid subset.
    const Repository* route_repo = &avoid_repo_;
    Repository tagged;
    if (config_.route_by_tag && result.query.tag != "none") {
        for (const auto& doc : avoid_repo_.documents) {
            if (std::find(doc.tags.begin(), doc.tags.end(), result.query.tag) !=
                doc.tags.end()) {
                tagged.documents.push_back(doc);
            }
        }
        tagged.name = RepoName::A;
        tagged.dim = avoid_repo_.dim;
        if (!tagged.empty()) route_repo = &tagged;
    }
    TopKResult routed = route_avoid(result.query, *route_repo, config_.retrieval);
    std::vector<Document> avoid_subset;
    for (const auto& hit : routed.hits) {
        result.avoid_ids.push_back(hit.doc->id);
        avoid_subset.push_back(*hit.doc);
    }
    result.timings.route_ms = clock.lap_ms();

    // Online fair synthesis from A_q.
    result.fair = synthesize_fair(avoid_subset, result.query, lexicon_, scorer_);
    std::vector<Document> fair_docs;
    if (!result.fair.empty()) {
        std::vector<std::string> fair_texts;
        for (const auto& f : result.fair) fair_texts.push_back(f.text);
        auto fair_vectors = embedder_.embed_batch(fair_texts);
        for (std::size_t i = 0; i < result.fair.size(); ++i) {
            if (fair_vectors[i].degenerate()) continue;
            Document doc;
            doc.id = "fair::" + result.fair[i].source_id +
                     "::" + std::to_string(result.fair[i].variant_index);
            doc.text = result.fair[i].text;
            doc.tokens = tokenize(doc.text);
            doc.kind = DocKind::fair_synth;
            if (const Document* src = avoid_repo_.find(result.fair[i].source_id)) {
                doc.tags = src->tags;
            }
            doc.embedding = std::move(fair_vectors[i]);
            fair_docs.push_back(std::move(doc));
        }
    }
    result.timings.synth_ms = clock.lap_ms();

    // Standard retrieval over the base corpus.
    std::vector<Document> normal_docs;
    if (config_.retrieval.k_normal > 0 && !normal_repo_.empty()) {
        TopKResult retrieved =
            top_k(result.query.embedding, normal_repo_, config_.retrieval.k_normal);
        for (const auto& hit : retrieved.hits) normal_docs.push_back(*hit.doc);
    }
    result.timings.retrieve_ms = clock.lap_ms();

    // Pool, filter, normalize, update, select.
    CandidatePool pool = build_pool(result.query, normal_docs, fair_docs,
                                    std::move(avoid_subset));
    score_pool(pool);
    result.pool_pre_filter = static_cast<int>(pool.size());

    RerankerState snapshot = state();
    CandidatePool kept;
    try {
        kept = filter_pool(pool, snapshot.tau_avoid);
    } catch (const EmptyPoolError& e) {
        throw EmptyPoolError(std::string(e.what()) +
                             "\n  consider relaxing tau_avoid for this corpus");
    }
    result.pool_post_filter = static_cast<int>(kept.size());
    normalize_pool(kept, snapshot.epsilon);

    UpdateOutcome update;
    if (learn) {
        // Streaming updates are serialized; the snapshot inside the lock is
        // the one the step is computed from.
        std::lock_guard lock(state_mutex_);
        update = streaming_update(kept, state_);
        state_ = update.state;
    } else {
        const LossGrad lg = listwise_loss(kept, snapshot.theta, snapshot.epsilon);
        update.state = snapshot;
        update.loss_before = lg.loss;
        update.loss_after = lg.loss;
    }
    const RerankerState after = update.state;

    result.selected = select_topk(kept, after.theta, after.k_final);
    result.prompt = assemble_prompt(result.query, result.selected);
    result.timings.rerank_ms = clock.lap_ms();

    result.generation = generation_.generate(result.prompt);
    result.timings.generate_ms = clock.lap_ms();

    // Trace assembly over the pre-filter pool.
    RerankTrace& trace = result.trace;
    trace.query_text = result.query.text;
    trace.query_tag = result.query.tag;
    trace.learning = learn;
    trace.theta_before = learn ? snapshot.theta : after.theta;
    trace.theta_after = after.theta;
    trace.loss_before = update.loss_before;
    trace.loss_after = update.loss_after;
    trace.eta = update.eta;
    trace.update_accepted = update.accepted;
    trace.pool_pre_filter = result.pool_pre_filter;
    trace.pool_post_filter = result.pool_post_filter;

    const std::vector<double> p = list_distribution(kept, after.theta);
    const std::vector<double> y = target_distribution(kept, after.epsilon);
    std::map<std::string, std::size_t> kept_index;
    for (std::size_t i = 0; i < kept.size(); ++i) kept_index[kept.members[i].doc.id] = i;
    std::set<std::string> selected_ids;
    for (const auto& c : result.selected) selected_ids.insert(c.doc.id);

    for (const auto& c : pool.members) {
        TraceCandidate tc;
        tc.id = c.doc.id;
        tc.kind = to_string(c.doc.kind);
        tc.s_q = c.s_q;
        tc.s_a = c.s_a;
        tc.max_avoid_sim = c.max_avoid_sim;
        auto it = kept_index.find(c.doc.id);
        if (it != kept_index.end()) {
            const Candidate& k = kept.members[it->second];
            tc.kept = true;
            tc.selected = selected_ids.count(c.doc.id) > 0;
            tc.s_q_norm = k.s_q_norm;
            tc.s_a_norm = k.s_a_norm;
            tc.score = score_linear(k, after.theta);
            tc.p = p[it->second];
            tc.y = y[it->second];
        }
        trace.candidates.push_back(std::move(tc));
    }
    return result;
}

} // namespace debiasrag
