#ifndef DEBIASRAG_COUNTERFACTUAL_HPP
#define DEBIASRAG_COUNTERFACTUAL_HPP

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "debiasrag/corpus.hpp"

namespace debiasrag {

// Symmetric paired token substitution map. Tokens are lowercase; each token
// belongs to at most one pair, so sequence substitution is an involution.
class AttributeLexicon {
public:
    struct Pair {
        std::string first;
        std::string second;
        std::string cls; // optional attribute class ("" when unclassified)
    };

    AttributeLexicon() = default;
    explicit AttributeLexicon(std::vector<Pair> pairs);

    // Partner token of `token`, or nullptr when the token is outside the map.
    const std::string* partner(const std::string& token) const;
    // Index of the pair containing `token`, or npos.
    std::size_t pair_index(const std::string& token) const;

    const std::vector<Pair>& pairs() const { return pairs_; }
    bool empty() const { return pairs_.empty(); }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::vector<Pair> pairs_;
    std::unordered_map<std::string, std::size_t> index_;
};

// JSON array of 2- or 3-element arrays: [["he","she"],["doctor","nurse","profession"]].
AttributeLexicon load_attribute_lexicon(const std::filesystem::path& path);

// Token-wise paired substitution: each token is replaced by its pair partner
// if it is in the lexicon, else left unchanged. Length-preserving involution.
std::vector<std::string> substitute(const std::vector<std::string>& tokens,
                                    const AttributeLexicon& lex);

// Add-one-smoothed character n-gram language model; the deterministic
// fluency stand-in used by refine and the evaluation harness.
class CharNgramModel {
public:
    static CharNgramModel train(const std::vector<std::string>& corpus, int order);

    // Sum of per-character log-probabilities.
    double log_prob(const std::string& text) const;
    // exp(-mean per-character log-probability); > 0, finite.
    double perplexity(const std::string& text) const;

    int order() const { return order_; }

private:
    CharNgramModel() = default;

    int order_ = 3;
    std::size_t vocab_size_ = 1; // alphabet + OOV bucket
    std::unordered_map<std::string, std::unordered_map<char, std::uint64_t>> counts_;
    std::unordered_map<std::string, std::uint64_t> context_totals_;
    std::unordered_map<char, bool> alphabet_;
};

// Per-text fluency scoring behind refine: local char-ngram model, remote
// log-prob service, or a caller-supplied function.
class FluencyScorer {
public:
    using PerplexityFn = std::function<double(const std::string&)>;

    static FluencyScorer char_ngram(CharNgramModel model);
    static FluencyScorer remote(std::string endpoint, int max_attempts = 3);
    static FluencyScorer from_function(PerplexityFn fn);

    double perplexity(const std::string& text) const;

private:
    FluencyScorer() = default;
    PerplexityFn fn_;
};

// One synthesized fair context, traceable to the avoid document it was
// derived from.
struct FairCandidate {
    std::string source_id;
    std::string text;
    double perplexity = 0.0;
    int variant_index = 0;
};

struct RefineOutcome {
    std::string text;
    double perplexity = 0.0;
    std::size_t index = 0; // position of the winner in the candidate list
};

// Picks the minimum-perplexity candidate; ties go to the earliest. Throws
// RefineError with per-candidate diagnostics when every candidate fails to
// score.
RefineOutcome refine(const std::vector<std::vector<std::string>>& candidates,
                     const FluencyScorer& scorer);

// Runs the counterfactual generator over A_q: paired substitution with case
// matching, a small variant fan (full substitution plus per-class partial
// substitutions, capped at 8), and a perplexity-filtered refine. Documents
// whose substitution changes nothing are dropped. Per-item refine failures
// are reported via `warnings` without aborting the batch.
std::vector<FairCandidate> synthesize_fair(const std::vector<Document>& avoid_subset,
                                           const Query& q, const AttributeLexicon& lex,
                                           const FluencyScorer& scorer,
                                           std::vector<std::string>* warnings = nullptr);

} // namespace debiasrag

#endif
