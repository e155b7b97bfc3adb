#include "debiasrag/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "debiasrag/errors.hpp"
#include "debiasrag/http.hpp"
#include "debiasrag/text.hpp"

namespace debiasrag {

namespace {

constexpr char kBos = '\x02';
constexpr std::size_t kMaxVariants = 8;

void warn(std::vector<std::string>* sink, const std::string& message) {
    if (sink) {
        sink->push_back(message);
    } else {
        std::cerr << "warning: " << message << "\n";
    }
}

} // namespace

AttributeLexicon::AttributeLexicon(std::vector<Pair> pairs) : pairs_(std::move(pairs)) {
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        auto& p = pairs_[i];
        p.first = to_lower(p.first);
        p.second = to_lower(p.second);
        if (p.first.empty() || p.second.empty()) {
            throw ContractError("attribute lexicon: empty token in pair " + std::to_string(i));
        }
        if (p.first == p.second) {
            throw ContractError("attribute lexicon: pair (\"" + p.first +
                                "\", \"" + p.second + "\") maps a token to itself");
        }
        for (const auto& tok : {p.first, p.second}) {
            if (!index_.emplace(tok, i).second) {
                throw ContractError("attribute lexicon: token \"" + tok +
                                    "\" appears in two different pairs");
            }
        }
    }
}

const std::string* AttributeLexicon::partner(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return nullptr;
    const Pair& p = pairs_[it->second];
    return token == p.first ? &p.second : &p.first;
}

std::size_t AttributeLexicon::pair_index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? npos : it->second;
}

AttributeLexicon load_attribute_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": invalid lexicon JSON: " + e.what());
    }
    if (!arr.is_array()) throw Error(path.string() + ": lexicon must be a JSON array of pairs");

    std::vector<AttributeLexicon::Pair> pairs;
    for (const auto& entry : arr) {
        if (!entry.is_array() || entry.size() < 2 || entry.size() > 3 ||
            !entry[0].is_string() || !entry[1].is_string()) {
            throw Error(path.string() + ": each lexicon entry must be [word, word] or "
                                        "[word, word, class]");
        }
        AttributeLexicon::Pair p;
        p.first = entry[0].get<std::string>();
        p.second = entry[1].get<std::string>();
        if (entry.size() == 3) {
            if (!entry[2].is_string()) {
                throw Error(path.string() + ": lexicon class must be a string");
            }
            p.cls = entry[2].get<std::string>();
        }
        pairs.push_back(std::move(p));
    }
    return AttributeLexicon(std::move(pairs));
}

std::vector<std::string> substitute(const std::vector<std::string>& tokens,
                                    const AttributeLexicon& lex) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
        const std::string* p = lex.partner(tok);
        out.push_back(p ? *p : tok);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Character n-gram model
// ---------------------------------------------------------------------------

CharNgramModel CharNgramModel::train(const std::vector<std::string>& corpus, int order) {
    if (order < 2 || order > 5) {
        throw ContractError("char-ngram order must be in [2,5], got " + std::to_string(order));
    }
    CharNgramModel model;
    model.order_ = order;
    for (const auto& text : corpus) {
        std::string seq(static_cast<std::size_t>(order - 1), kBos);
        seq += text;
        for (std::size_t i = static_cast<std::size_t>(order - 1); i < seq.size(); ++i) {
            const std::string ctx = seq.substr(i - (order - 1), order - 1);
            model.counts_[ctx][seq[i]]++;
            model.context_totals_[ctx]++;
            model.alphabet_[seq[i]] = true;
        }
    }
    model.vocab_size_ = model.alphabet_.size() + 1; // +1: OOV bucket
    return model;
}

double CharNgramModel::log_prob(const std::string& text) const {
    const double v = static_cast<double>(vocab_size_);
    std::string seq(static_cast<std::size_t>(order_ - 1), kBos);
    seq += text;
    double logp = 0.0;
    for (std::size_t i = static_cast<std::size_t>(order_ - 1); i < seq.size(); ++i) {
        const std::string ctx = seq.substr(i - (order_ - 1), order_ - 1);
        auto ctx_it = context_totals_.find(ctx);
        if (ctx_it == context_totals_.end()) {
            logp += std::log(1.0 / v);
            continue;
        }
        std::uint64_t count = 0;
        auto row = counts_.find(ctx);
        if (row != counts_.end()) {
            auto cell = row->second.find(seq[i]);
            if (cell != row->second.end()) count = cell->second;
        }
        logp += std::log((static_cast<double>(count) + 1.0) /
                         (static_cast<double>(ctx_it->second) + v));
    }
    return logp;
}

double CharNgramModel::perplexity(const std::string& text) const {
    const std::size_t symbols = text.size();
    if (symbols == 0) return 1.0;
    return std::exp(-log_prob(text) / static_cast<double>(symbols));
}

// ---------------------------------------------------------------------------
// Fluency scorer
// ---------------------------------------------------------------------------

FluencyScorer FluencyScorer::char_ngram(CharNgramModel model) {
    FluencyScorer s;
    auto shared = std::make_shared<CharNgramModel>(std::move(model));
    s.fn_ = [shared](const std::string& text) { return shared->perplexity(text); };
    return s;
}

FluencyScorer FluencyScorer::remote(std::string endpoint, int max_attempts) {
    FluencyScorer s;
    s.fn_ = [endpoint = std::move(endpoint), max_attempts](const std::string& text) {
        nlohmann::json res = http::post_json(endpoint, "/score",
                                             nlohmann::json{{"texts", {text}}}, max_attempts,
                                             "fluency score");
        if (!res.contains("logprobs") || !res["logprobs"].is_array() ||
            res["logprobs"].size() != 1) {
            throw ContractError("score: response must carry one \"logprobs\" entry per text");
        }
        const double logp = res["logprobs"][0].get<double>();
        if (!std::isfinite(logp)) throw Error("score: non-finite log-probability");
        // The wire carries summed token log-probs only; normalize by length.
        const double symbols = std::max<std::size_t>(1, text.size());
        return std::exp(-logp / symbols);
    };
    return s;
}

FluencyScorer FluencyScorer::from_function(PerplexityFn fn) {
    FluencyScorer s;
    s.fn_ = std::move(fn);
    return s;
}

double FluencyScorer::perplexity(const std::string& text) const {
    if (!fn_) throw ContractError("fluency scorer not configured");
    const double p = fn_(text);
    if (!std::isfinite(p) || p <= 0.0) {
        throw Error("fluency scorer returned invalid perplexity " + std::to_string(p));
    }
    return p;
}

RefineOutcome refine(const std::vector<std::vector<std::string>>& candidates,
                     const FluencyScorer& scorer) {
    if (candidates.empty()) throw ContractError("refine: no candidates");

    RefineOutcome best;
    bool found = false;
    std::string diagnostics;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::string text = join_tokens(candidates[i]);
        double perp;
        try {
            perp = scorer.perplexity(text);
        } catch (const std::exception& e) {
            diagnostics += "\n  candidate " + std::to_string(i) + ": " + e.what();
            continue;
        }
        if (!found || perp < best.perplexity) {
            best = {text, perp, i};
            found = true;
        }
    }
    if (!found) {
        throw RefineError("refine: every candidate failed to score:" + diagnostics);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Fair subset synthesis
// ---------------------------------------------------------------------------

namespace {

// Case-matched substitution restricted to the pair indices in `active`
// (empty = all pairs). Returns the rewritten tokens and how many changed.
std::pair<std::vector<std::string>, int> substitute_cased(
    const std::vector<std::string>& cased_tokens, const AttributeLexicon& lex,
    const std::set<std::size_t>& active) {
    std::vector<std::string> out;
    out.reserve(cased_tokens.size());
    int changed = 0;
    for (const auto& tok : cased_tokens) {
        const std::string lower = to_lower(tok);
        const std::size_t idx = lex.pair_index(lower);
        if (idx == AttributeLexicon::npos || (!active.empty() && !active.count(idx))) {
            out.push_back(tok);
            continue;
        }
        const std::string* partner = lex.partner(lower);
        out.push_back(match_case(tok, *partner));
        ++changed;
    }
    return {std::move(out), changed};
}

} // namespace

std::vector<FairCandidate> synthesize_fair(const std::vector<Document>& avoid_subset,
                                           const Query& q, const AttributeLexicon& lex,
                                           const FluencyScorer& scorer,
                                           std::vector<std::string>* warnings) {
    (void)q; // conditioning signal is kept for provenance only
    std::vector<FairCandidate> out;

    for (const auto& doc : avoid_subset) {
        const auto cased = split_preserve_case(doc.text);
        auto [full, changed] = substitute_cased(cased, lex, {});
        if (changed == 0) {
            warn(warnings, "synthesize_fair: avoid document \"" + doc.id +
                               "\" has no lexicon tokens; no counterfactual exists");
            continue;
        }

        // Variant fan: the full substitution first, then one partial variant
        // per substitution group (attribute class, or the pair itself when
        // unclassified), capped at kMaxVariants.
        std::vector<std::vector<std::string>> variants{full};
        std::map<std::string, std::set<std::size_t>> groups;
        for (const auto& tok : cased) {
            const std::size_t idx = lex.pair_index(to_lower(tok));
            if (idx == AttributeLexicon::npos) continue;
            const auto& pair = lex.pairs()[idx];
            const std::string key =
                pair.cls.empty() ? "pair:" + pair.first + "|" + pair.second : pair.cls;
            groups[key].insert(idx);
        }
        if (groups.size() > 1) {
            for (const auto& [key, active] : groups) {
                if (variants.size() >= kMaxVariants) break;
                auto [partial, n] = substitute_cased(cased, lex, active);
                if (n == 0 || partial == full || partial == cased) continue;
                if (std::find(variants.begin(), variants.end(), partial) != variants.end()) {
                    continue;
                }
                variants.push_back(std::move(partial));
            }
        }

        try {
            RefineOutcome best = refine(variants, scorer);
            out.push_back({doc.id, best.text, best.perplexity, static_cast<int>(best.index)});
        } catch (const RefineError& e) {
            warn(warnings, "synthesize_fair: refine failed for avoid document \"" + doc.id +
                               "\": " + e.what());
        }
    }
    return out;
}

} // namespace debiasrag
