#ifndef DEBIASRAG_RERANK_HPP
#define DEBIASRAG_RERANK_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "debiasrag/retrieval.hpp"

namespace debiasrag {

// Reranker parameters. theta lives on the 2-simplex: both weights
// non-negative and summing to 1 within 1e-9 at all observable times.
struct RerankerState {
    std::array<double, 2> theta{0.5, 0.5}; // (relevance weight, avoid-distance weight)
    double eta0 = 0.1;                     // initial streaming step size
    double epsilon = 1e-9;                 // normalization guard
    double tau_avoid = 0.9;                // avoid-similarity filter threshold
    int k_final = 4;                       // final context count
    int max_backtracks = 20;               // step halvings before skipping an update

    void validate() const;
};

// Relevance of a candidate to the query: sim(q, c).
double score_relevance(const Query& q, const Candidate& c);

// Largest cosine similarity between a candidate and any avoid trigger;
// 0 for an empty avoid set (vacuous maximum).
double max_avoid_similarity(const Candidate& c, const std::vector<Document>& avoid_set);

// Distance-from-avoid, larger is better: 1 - max_a sim(c, a). Empty avoid
// set yields 1.
double score_avoid_distance(const Candidate& c, const std::vector<Document>& avoid_set);

// Fills s_q, s_a, and max_avoid_sim for every pool member.
void score_pool(CandidatePool& pool);

// Keeps candidates whose max avoid-similarity is <= tau_avoid, preserving
// order. Throws EmptyPoolError carrying per-candidate max-sim diagnostics
// when everything is discarded.
CandidatePool filter_pool(const CandidatePool& pool, double tau_avoid);

// Per-pool min-max normalization of both signals to [0,1]:
// (s - min) / (max - min + epsilon), clipped; if max - min < epsilon the
// signal is degenerate and every value becomes 0.5.
void normalize_pool(CandidatePool& pool, double epsilon);

// Debias-guided score S_theta(c|q) = theta1 * s_q_norm + theta2 * s_a_norm.
// Requires a normalized candidate and theta on the simplex.
double score_linear(const Candidate& c, const std::array<double, 2>& theta);

// Numerically stable softmax (max-subtracted), sums to 1.
std::vector<double> softmax(const std::vector<double>& values);

// Model-induced list distribution: softmax over S_theta.
std::vector<double> list_distribution(const CandidatePool& pool,
                                      const std::array<double, 2>& theta);

// Theta-independent target: u(c) = s_q_norm + s_a_norm, min-max rescaled
// over the pool (all 0.5 when degenerate), then softmax.
std::vector<double> target_distribution(const CandidatePool& pool, double epsilon);

struct LossGrad {
    double loss = 0.0;
    std::array<double, 2> grad{0.0, 0.0};
};

// Listwise cross-entropy L = -sum_c y_c log p_theta(c) and its analytic
// gradient sum_c (p_theta(c) - y_c) * phi_q(c).
LossGrad listwise_loss(const CandidatePool& pool, const std::array<double, 2>& theta,
                       double epsilon);

// Euclidean projection onto the 2-simplex.
std::array<double, 2> project_simplex(std::array<double, 2> v);

struct UpdateOutcome {
    RerankerState state;     // state after the step (theta possibly unchanged)
    double loss_before = 0.0;
    double loss_after = 0.0;
    double eta = 0.0;        // accepted step size, 0 when skipped
    bool accepted = false;
    int backtracks = 0;      // halvings performed before acceptance/skip
};

// One projected-gradient streaming step with backtracking line search:
// theta' = proj(theta - eta * grad), eta halved from eta0 until
// L(theta') <= L(theta); theta is left unchanged if no step qualifies.
UpdateOutcome streaming_update(const CandidatePool& pool, const RerankerState& state);

// k_final highest-S_theta candidates, descending score, ties by ascending id.
std::vector<Candidate> select_topk(const CandidatePool& pool,
                                   const std::array<double, 2>& theta, int k_final);

// Per-query observability record; serializes to one JSONL line.
struct TraceCandidate {
    std::string id;
    std::string kind;
    double s_q = 0.0;
    double s_a = 0.0;
    double max_avoid_sim = 0.0;
    bool kept = false;
    bool selected = false;
    std::optional<double> s_q_norm, s_a_norm, score, p, y;
};

struct RerankTrace {
    std::string query_text;
    std::string query_tag;
    bool learning = false;
    std::array<double, 2> theta_before{0.0, 0.0};
    std::array<double, 2> theta_after{0.0, 0.0};
    double loss_before = 0.0;
    double loss_after = 0.0;
    double eta = 0.0;
    bool update_accepted = false;
    int pool_pre_filter = 0;
    int pool_post_filter = 0;
    std::vector<TraceCandidate> candidates;

    nlohmann::json to_json() const;
};

} // namespace debiasrag

#endif
