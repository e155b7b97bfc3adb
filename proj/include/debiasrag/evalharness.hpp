#ifndef DEBIASRAG_EVALHARNESS_HPP
#define DEBIASRAG_EVALHARNESS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "debiasrag/counterfactual.hpp"
#include "debiasrag/pipeline.hpp"

namespace debiasrag {

// One cloze item: a context plus a stereotype / anti-stereotype / unrelated
// option triple.
struct StereoItem {
    std::string context;
    std::string stereotype;
    std::string anti_stereotype;
    std::string unrelated;
    std::string domain;
};

// Minimal pair differing only in the stereotyped word.
struct CrowsPair {
    std::string sent_more;
    std::string sent_less;
    std::string bias_type;
};

std::vector<StereoItem> load_stereoset(const std::filesystem::path& path);
std::vector<CrowsPair> load_crows(const std::filesystem::path& path);

// Sentence log-probability stand-in for LLM likelihoods: char-ngram model,
// remote /score service, or a caller-supplied function.
class SentenceScorer {
public:
    using LogProbFn = std::function<double(const std::string&)>;

    static SentenceScorer from_ngram(CharNgramModel model);
    static SentenceScorer from_remote(std::string endpoint, int max_attempts = 3);
    static SentenceScorer from_function(LogProbFn fn);

    // Finite log-probability of the text; throws on scorer failure.
    double log_prob(const std::string& text) const;

private:
    SentenceScorer() = default;
    LogProbFn fn_;
};

// Optional retrieved-context hook: text prepended when scoring an item.
using ContextProvider = std::function<std::string(const StereoItem&)>;

struct StereoScores {
    double lms = 0.0;
    double ss = 0.0;
    double icat = 0.0;
    int skipped = 0;
    int total = 0;
};

// StereoSet pass: per item, each option is scored conditioned on the item
// context (plus provider text when given). LMS counts meaningful options
// beating unrelated, SS counts stereotype beating anti-stereotype; exact
// ties credit 0.5. Fails when more than 1% of items skip on scorer errors.
StereoScores eval_stereoset(const std::vector<StereoItem>& items, const SentenceScorer& scorer,
                            const ContextProvider& context_provider = nullptr);

// Idealized CAT score: lms * min(ss, 100 - ss) / 50.
double icat(double lms, double ss);

struct CrowsScore {
    double cps = 0.0;
    int skipped = 0;
    int total = 0;
};

// Percentage of pairs where the stereotyped sentence scores higher; exact
// ties count 0.5.
CrowsScore eval_crows(const std::vector<CrowsPair>& pairs, const SentenceScorer& scorer);

// WEAT-style effect size between target lists X, Y and attribute lists A, B:
// d = (mean_X s - mean_Y s) / std_{X u Y} s with sample (n-1) std, where
// s(w) = mean_A cos(w,a) - mean_B cos(w,b). Throws on zero variance.
double seat_effect_size(const std::vector<std::string>& X, const std::vector<std::string>& Y,
                        const std::vector<std::string>& A, const std::vector<std::string>& B,
                        const Embedder& embedder);

// Appendix decoding rule: multiply the probability of biased tokens by alpha
// and renormalize. alpha = 1 is the exact identity; alpha = 0 masks the
// biased set.
std::vector<double> suppress_distribution(const std::vector<double>& p,
                                          const std::set<std::size_t>& biased_tokens,
                                          double alpha);

struct BiasMetrics {
    double lms = 0.0;
    double ss = 0.0;
    double icat = 0.0;
    double cps = 0.0;
    std::map<std::string, double> seat;

    // Enforces the internal consistency icat == lms * min(ss, 100-ss) / 50
    // within 1e-6 and the [0,100] ranges.
    void validate() const;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

enum class SnapshotSelection { min_ss_deviation, max_icat };

struct OptimizeRecord {
    int iteration = 0;
    std::array<double, 2> theta{0.0, 0.0}; // after this iteration's updates
    double lms = 0.0;
    double ss = 0.0;
    double icat = 0.0;
    double running_ss = 0.0;
    double running_icat = 0.0;

    nlohmann::json to_json() const;
};

struct OptimizeResult {
    RerankerState final_state;
    RerankerState best_state;
    int best_iteration = -1; // -1 when no iteration ran
    std::vector<OptimizeRecord> history;
};

// The lambda-question optimization driver: per iteration, sample lambda
// questions, answer each through the pipeline with learning enabled (one
// streaming theta update per query), then record SS/ICAT on the sample with
// the retrieved contexts prepended. Returns the full history plus the theta
// snapshot with the best recorded metric.
OptimizeResult optimize_loop(const std::vector<StereoItem>& questions, int lambda, int iters,
                             Pipeline& pipeline, const SentenceScorer& scorer,
                             std::uint64_t seed,
                             SnapshotSelection selection = SnapshotSelection::min_ss_deviation);

} // namespace debiasrag

#endif
