#include "debiasrag/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "debiasrag/errors.hpp"

namespace debiasrag {

namespace {

bool on_simplex(const std::array<double, 2>& theta) {
    return theta[0] >= 0.0 && theta[1] >= 0.0 && std::abs(theta[0] + theta[1] - 1.0) <= 1e-9;
}

void require_scored(const CandidatePool& pool, const char* op) {
    for (const auto& c : pool.members) {
        if (std::isnan(c.s_q) || std::isnan(c.s_a)) {
            throw ContractError(std::string(op) + ": pool has unscored candidates; run score_pool first");
        }
    }
}

void require_normalized(const Candidate& c, const char* op) {
    if (std::isnan(c.s_q_norm) || std::isnan(c.s_a_norm)) {
        throw ContractError(std::string(op) + ": candidate \"" + c.doc.id +
                            "\" is not normalized; run normalize_pool first");
    }
    if (c.s_q_norm < 0.0 || c.s_q_norm > 1.0 || c.s_a_norm < 0.0 || c.s_a_norm > 1.0) {
        throw ContractError(std::string(op) + ": candidate \"" + c.doc.id +
                            "\" has normalized scores outside [0,1]");
    }
}

// Min-max rescale with the epsilon guard in the denominator; degenerate
// spread maps everything to 0.5.
std::vector<double> minmax_guarded(const std::vector<double>& values, double epsilon) {
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(values.size());
    if (hi - lo < epsilon) {
        std::fill(out.begin(), out.end(), 0.5);
        return out;
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::clamp((values[i] - lo) / (hi - lo + epsilon), 0.0, 1.0);
    }
    return out;
}

} // namespace

void RerankerState::validate() const {
    if (!on_simplex(theta)) {
        throw ContractError("theta must lie on the 2-simplex (non-negative, sum 1 within 1e-9)");
    }
    if (eta0 <= 0.0) throw ContractError("eta0 must be positive");
    if (epsilon <= 0.0) throw ContractError("epsilon must be positive");
    if (tau_avoid < 0.0 || tau_avoid > 1.0) throw ContractError("tau_avoid must be in [0,1]");
    if (k_final < 1) throw ContractError("k_final must be >= 1");
    if (max_backtracks < 0) throw ContractError("max_backtracks must be >= 0");
}

double score_relevance(const Query& q, const Candidate& c) {
    return cosine(q.embedding, c.doc.embedding);
}

double max_avoid_similarity(const Candidate& c, const std::vector<Document>& avoid_set) {
    double max_sim = 0.0; // vacuous maximum for an empty avoid set
    for (const auto& a : avoid_set) {
        max_sim = std::max(max_sim, cosine(c.doc.embedding, a.embedding));
    }
    return max_sim;
}

double score_avoid_distance(const Candidate& c, const std::vector<Document>& avoid_set) {
    return 1.0 - max_avoid_similarity(c, avoid_set);
}

void score_pool(CandidatePool& pool) {
    for (auto& c : pool.members) {
        c.s_q = score_relevance(pool.query, c);
        c.max_avoid_sim = max_avoid_similarity(c, pool.avoid_set);
        c.s_a = 1.0 - c.max_avoid_sim;
    }
}

CandidatePool filter_pool(const CandidatePool& pool, double tau_avoid) {
    if (tau_avoid < 0.0 || tau_avoid > 1.0) {
        throw ContractError("filter_pool: tau_avoid must be in [0,1]");
    }
    CandidatePool kept;
    kept.query = pool.query;
    kept.avoid_set = pool.avoid_set;

    std::string diagnostics;
    for (const auto& c : pool.members) {
        const double max_sim = std::isnan(c.max_avoid_sim)
                                   ? max_avoid_similarity(c, pool.avoid_set)
                                   : c.max_avoid_sim;
        if (max_sim <= tau_avoid) {
            Candidate copy = c;
            copy.max_avoid_sim = max_sim;
            if (std::isnan(copy.s_a)) copy.s_a = 1.0 - max_sim;
            kept.members.push_back(std::move(copy));
        } else {
            diagnostics += "\n  \"" + c.doc.id + "\": max avoid-similarity " +
                           std::to_string(max_sim);
        }
    }
    if (kept.empty() && !pool.empty()) {
        throw EmptyPoolError("filter_pool: every candidate exceeds tau_avoid = " +
                             std::to_string(tau_avoid) + diagnostics);
    }
    return kept;
}

void normalize_pool(CandidatePool& pool, double epsilon) {
    if (pool.empty()) throw ContractError("normalize_pool: empty pool");
    require_scored(pool, "normalize_pool");

    std::vector<double> sq, sa;
    sq.reserve(pool.size());
    sa.reserve(pool.size());
    for (const auto& c : pool.members) {
        sq.push_back(c.s_q);
        sa.push_back(c.s_a);
    }
    const auto nq = minmax_guarded(sq, epsilon);
    const auto na = minmax_guarded(sa, epsilon);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        pool.members[i].s_q_norm = nq[i];
        pool.members[i].s_a_norm = na[i];
    }
}

double score_linear(const Candidate& c, const std::array<double, 2>& theta) {
    if (!on_simplex(theta)) throw ContractError("score_linear: theta is off the simplex");
    require_normalized(c, "score_linear");
    return theta[0] * c.s_q_norm + theta[1] * c.s_a_norm;
}

std::vector<double> softmax(const std::vector<double>& values) {
    if (values.empty()) throw ContractError("softmax: empty input");
    const double m = *std::max_element(values.begin(), values.end());
    std::vector<double> out(values.size());
    double z = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::exp(values[i] - m);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

std::vector<double> list_distribution(const CandidatePool& pool,
                                      const std::array<double, 2>& theta) {
    if (pool.empty()) throw ContractError("list_distribution: empty pool");
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const auto& c : pool.members) scores.push_back(score_linear(c, theta));
    return softmax(scores);
}

std::vector<double> target_distribution(const CandidatePool& pool, double epsilon) {
    if (pool.empty()) throw ContractError("target_distribution: empty pool");
    std::vector<double> u;
    u.reserve(pool.size());
    for (const auto& c : pool.members) {
        require_normalized(c, "target_distribution");
        u.push_back(c.s_q_norm + c.s_a_norm);
    }
    // Exact min-max here (no epsilon in the denominator); the guard only
    // routes the degenerate all-equal case to 0.5.
    auto [lo_it, hi_it] = std::minmax_element(u.begin(), u.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> u_hat(u.size(), 0.5);
    if (hi - lo >= epsilon) {
        for (std::size_t i = 0; i < u.size(); ++i) u_hat[i] = (u[i] - lo) / (hi - lo);
    }
    return softmax(u_hat);
}

LossGrad listwise_loss(const CandidatePool& pool, const std::array<double, 2>& theta,
                       double epsilon) {
    if (pool.empty()) throw ContractError("listwise_loss: empty pool");
    const std::vector<double> y = target_distribution(pool, epsilon);

    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const auto& c : pool.members) scores.push_back(score_linear(c, theta));

    // log p_c = S_c - logsumexp(S), evaluated max-subtracted.
    const double m = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - m);
    const double lse = m + std::log(z);

    LossGrad out;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double log_p = scores[i] - lse;
        const double p = std::exp(log_p);
        out.loss -= y[i] * log_p;
        const double diff = p - y[i];
        out.grad[0] += diff * pool.members[i].s_q_norm;
        out.grad[1] += diff * pool.members[i].s_a_norm;
    }
    return out;
}

std::array<double, 2> project_simplex(std::array<double, 2> v) {
    if (!std::isfinite(v[0]) || !std::isfinite(v[1])) {
        throw ContractError("project_simplex: non-finite input");
    }
    const double shift = (v[0] + v[1] - 1.0) / 2.0;
    double a = v[0] - shift;
    double b = v[1] - shift;
    if (a < 0.0) return {0.0, 1.0};
    if (b < 0.0) return {1.0, 0.0};
    return {a, 1.0 - a}; // exact unit sum
}

UpdateOutcome streaming_update(const CandidatePool& pool, const RerankerState& state) {
    state.validate();
    if (pool.empty()) throw ContractError("streaming_update: empty pool");

    const LossGrad at_theta = listwise_loss(pool, state.theta, state.epsilon);

    UpdateOutcome outcome;
    outcome.state = state;
    outcome.loss_before = at_theta.loss;
    outcome.loss_after = at_theta.loss;

    double eta = state.eta0;
    for (int tries = 0; tries <= state.max_backtracks; ++tries) {
        const std::array<double, 2> candidate = project_simplex(
            {state.theta[0] - eta * at_theta.grad[0], state.theta[1] - eta * at_theta.grad[1]});
        const double loss_after = listwise_loss(pool, candidate, state.epsilon).loss;
        if (loss_after <= at_theta.loss) {
            outcome.state.theta = candidate;
            outcome.loss_after = loss_after;
            outcome.eta = eta;
            outcome.accepted = true;
            outcome.backtracks = tries;
            return outcome;
        }
        eta /= 2.0;
    }
    // No step decreased the loss: skip the update, flagged for the trace.
    outcome.backtracks = state.max_backtracks;
    return outcome;
}

std::vector<Candidate> select_topk(const CandidatePool& pool,
                                   const std::array<double, 2>& theta, int k_final) {
    if (pool.empty()) throw ContractError("select_topk: empty pool");
    if (k_final < 1) throw ContractError("select_topk: k_final must be >= 1");

    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        order.emplace_back(score_linear(pool.members[i], theta), i);
    }
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return pool.members[a.second].doc.id < pool.members[b.second].doc.id;
    });

    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k_final), order.size());
    std::vector<Candidate> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool.members[order[i].second]);
    return out;
}

nlohmann::json RerankTrace::to_json() const {
    nlohmann::json candidates_json = nlohmann::json::array();
    for (const auto& c : candidates) {
        nlohmann::json entry{{"id", c.id},
                             {"kind", c.kind},
                             {"s_q", c.s_q},
                             {"s_a", c.s_a},
                             {"max_avoid_sim", c.max_avoid_sim},
                             {"kept", c.kept},
                             {"selected", c.selected}};
        auto put = [&entry](const char* key, const std::optional<double>& v) {
            entry[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        };
        put("s_q_norm", c.s_q_norm);
        put("s_a_norm", c.s_a_norm);
        put("score", c.score);
        put("p", c.p);
        put("y", c.y);
        candidates_json.push_back(std::move(entry));
    }
    return nlohmann::json{{"query", query_text},
                          {"tag", query_tag},
                          {"learning", learning},
                          {"theta_before", theta_before},
                          {"theta_after", theta_after},
                          {"loss_before", loss_before},
                          {"loss_after", loss_after},
                          {"eta", eta},
                          {"update_accepted", update_accepted},
                          {"pool_pre_filter", pool_pre_filter},
                          {"pool_post_filter", pool_post_filter},
                          {"candidates", candidates_json}};
}

} // namespace debiasrag
