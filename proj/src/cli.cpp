#include "debiasrag/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "debiasrag/errors.hpp"
#include "debiasrag/evalharness.hpp"
#include "debiasrag/pipeline.hpp"

namespace debiasrag {

// ---------------------------------------------------------------------------
// RunConfig: flat TOML subset (key = value; strings, numbers, bools, and the
// 2-element theta array).
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    // TOML floats need a decimal point or exponent.
    if (s.find_first_of(".eE") == std::string::npos &&
        s.find_first_of("0123456789") != std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

struct ConfigParser {
    RunConfig& cfg;
    int line_no = 0;

    [[noreturn]] void fail(const std::string& message) const {
        throw Error("config line " + std::to_string(line_no) + ": " + message);
    }

    std::string parse_string(const std::string& raw) const {
        if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
            fail("expected a quoted string, got: " + raw);
        }
        std::string out;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            if (raw[i] == '\\' && i + 2 < raw.size()) {
                ++i;
                switch (raw[i]) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: fail(std::string("unsupported escape \\") + raw[i]);
                }
            } else {
                out.push_back(raw[i]);
            }
        }
        return out;
    }

    double parse_double(const std::string& raw) const {
        try {
            std::size_t pos = 0;
            const double v = std::stod(raw, &pos);
            if (pos != raw.size()) fail("trailing characters in number: " + raw);
            return v;
        } catch (const std::exception&) {
            fail("invalid number: " + raw);
        }
    }

    long long parse_int(const std::string& raw) const {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(raw, &pos);
            if (pos != raw.size()) fail("trailing characters in integer: " + raw);
            return v;
        } catch (const std::exception&) {
            fail("invalid integer: " + raw);
        }
    }

    std::uint64_t parse_u64(const std::string& raw) const {
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(raw, &pos);
            if (pos != raw.size()) fail("trailing characters in integer: " + raw);
            return v;
        } catch (const std::exception&) {
            fail("invalid unsigned integer: " + raw);
        }
    }

    bool parse_bool(const std::string& raw) const {
        if (raw == "true") return true;
        if (raw == "false") return false;
        fail("expected true or false, got: " + raw);
    }

    std::array<double, 2> parse_array2(const std::string& raw) const {
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
            fail("expected [a, b], got: " + raw);
        }
        const std::string inner = raw.substr(1, raw.size() - 2);
        const auto comma = inner.find(',');
        if (comma == std::string::npos || inner.find(',', comma + 1) != std::string::npos) {
            fail("theta must have exactly 2 entries");
        }
        return {parse_double(trim(inner.substr(0, comma))),
                parse_double(trim(inner.substr(comma + 1)))};
    }

    // Applies one key. Returns false for unknown keys.
    bool apply(const std::string& key, const std::string& value) const {
        if (key == "embedder_kind") cfg.embedder_kind = parse_string(value);
        else if (key == "embedder_dim") cfg.embedder_dim = static_cast<std::size_t>(parse_u64(value));
        else if (key == "embedder_endpoint") cfg.embedder_endpoint = parse_string(value);
        else if (key == "embedder_seed") cfg.embedder_seed = parse_u64(value);
        else if (key == "scorer_kind") cfg.scorer_kind = parse_string(value);
        else if (key == "scorer_order") cfg.scorer_order = static_cast<int>(parse_int(value));
        else if (key == "scorer_endpoint") cfg.scorer_endpoint = parse_string(value);
        else if (key == "generation_kind") cfg.generation_kind = parse_string(value);
        else if (key == "generation_endpoint") cfg.generation_endpoint = parse_string(value);
        else if (key == "generation_max_tokens") cfg.generation_max_tokens = static_cast<int>(parse_int(value));
        else if (key == "k_avoid") cfg.k_avoid = static_cast<int>(parse_int(value));
        else if (key == "k_normal") cfg.k_normal = static_cast<int>(parse_int(value));
        else if (key == "k_final") cfg.k_final = static_cast<int>(parse_int(value));
        else if (key == "tau_avoid") cfg.tau_avoid = parse_double(value);
        else if (key == "eta0") cfg.eta0 = parse_double(value);
        else if (key == "epsilon") cfg.epsilon = parse_double(value);
        else if (key == "theta") cfg.theta = parse_array2(value);
        else if (key == "max_backtracks") cfg.max_backtracks = static_cast<int>(parse_int(value));
        else if (key == "route_by_tag") cfg.route_by_tag = parse_bool(value);
        else if (key == "alpha") cfg.alpha = parse_double(value);
        else if (key == "lambda") cfg.lambda = static_cast<int>(parse_int(value));
        else if (key == "seed") cfg.seed = parse_u64(value);
        else if (key == "avoid_cache") cfg.avoid_cache = parse_string(value);
        else if (key == "normal_cache") cfg.normal_cache = parse_string(value);
        else if (key == "attribute_lexicon") cfg.attribute_lexicon = parse_string(value);
        else if (key == "tag_lexicon") cfg.tag_lexicon = parse_string(value);
        else return false;
        return true;
    }
};

} // namespace

RunConfig RunConfig::from_toml_string(const std::string& text) {
    RunConfig cfg;
    ConfigParser parser{cfg};
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++parser.line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) parser.fail("expected key = value");
        const std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        // Strip a trailing comment outside quoted strings.
        if (!value.empty() && value[0] != '"') {
            const auto hash = value.find('#');
            if (hash != std::string::npos) value = trim(value.substr(0, hash));
        }
        if (key.empty() || value.empty()) parser.fail("expected key = value");
        if (!seen.insert(key).second) parser.fail("duplicate key \"" + key + "\"");
        if (!parser.apply(key, value)) parser.fail("unknown key \"" + key + "\"");
    }
    return cfg;
}

RunConfig RunConfig::from_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_toml_string(buf.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string RunConfig::to_toml_string() const {
    std::ostringstream out;
    out << "embedder_kind = " << quote(embedder_kind) << "\n";
    out << "embedder_dim = " << embedder_dim << "\n";
    out << "embedder_endpoint = " << quote(embedder_endpoint) << "\n";
    out << "embedder_seed = " << embedder_seed << "\n";
    out << "scorer_kind = " << quote(scorer_kind) << "\n";
    out << "scorer_order = " << scorer_order << "\n";
    out << "scorer_endpoint = " << quote(scorer_endpoint) << "\n";
    out << "generation_kind = " << quote(generation_kind) << "\n";
    out << "generation_endpoint = " << quote(generation_endpoint) << "\n";
    out << "generation_max_tokens = " << generation_max_tokens << "\n";
    out << "k_avoid = " << k_avoid << "\n";
    out << "k_normal = " << k_normal << "\n";
    out << "k_final = " << k_final << "\n";
    out << "tau_avoid = " << format_double(tau_avoid) << "\n";
    out << "eta0 = " << format_double(eta0) << "\n";
    out << "epsilon = " << format_double(epsilon) << "\n";
    out << "theta = [" << format_double(theta[0]) << ", " << format_double(theta[1]) << "]\n";
    out << "max_backtracks = " << max_backtracks << "\n";
    out << "route_by_tag = " << (route_by_tag ? "true" : "false") << "\n";
    out << "alpha = " << format_double(alpha) << "\n";
    out << "lambda = " << lambda << "\n";
    out << "seed = " << seed << "\n";
    out << "avoid_cache = " << quote(avoid_cache) << "\n";
    out << "normal_cache = " << quote(normal_cache) << "\n";
    out << "attribute_lexicon = " << quote(attribute_lexicon) << "\n";
    out << "tag_lexicon = " << quote(tag_lexicon) << "\n";
    return std::move(out).str();
}

void RunConfig::validate() const {
    if (embedder_kind != "deterministic-hash" && embedder_kind != "remote") {
        throw Error("embedder_kind must be \"deterministic-hash\" or \"remote\"");
    }
    if (scorer_kind != "char-ngram" && scorer_kind != "remote") {
        throw Error("scorer_kind must be \"char-ngram\" or \"remote\"");
    }
    if (generation_kind != "null" && generation_kind != "remote") {
        throw Error("generation_kind must be \"null\" or \"remote\"");
    }
    if (alpha < 0.0 || alpha > 1.0) throw Error("alpha must be in [0,1]");
    if (lambda < 1) throw Error("lambda must be >= 1");
    RerankerState state;
    state.theta = theta;
    state.eta0 = eta0;
    state.epsilon = epsilon;
    state.tau_avoid = tau_avoid;
    state.k_final = k_final;
    state.max_backtracks = max_backtracks;
    state.validate();
    RetrievalParams params{k_avoid, k_normal};
    params.validate();
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.embedder_kind == b.embedder_kind && a.embedder_dim == b.embedder_dim &&
           a.embedder_endpoint == b.embedder_endpoint && a.embedder_seed == b.embedder_seed &&
           a.scorer_kind == b.scorer_kind && a.scorer_order == b.scorer_order &&
           a.scorer_endpoint == b.scorer_endpoint && a.generation_kind == b.generation_kind &&
           a.generation_endpoint == b.generation_endpoint &&
           a.generation_max_tokens == b.generation_max_tokens && a.k_avoid == b.k_avoid &&
           a.k_normal == b.k_normal && a.k_final == b.k_final && a.tau_avoid == b.tau_avoid &&
           a.eta0 == b.eta0 && a.epsilon == b.epsilon && a.theta == b.theta &&
           a.max_backtracks == b.max_backtracks && a.route_by_tag == b.route_by_tag &&
           a.alpha == b.alpha && a.lambda == b.lambda && a.seed == b.seed &&
           a.avoid_cache == b.avoid_cache && a.normal_cache == b.normal_cache &&
           a.attribute_lexicon == b.attribute_lexicon && a.tag_lexicon == b.tag_lexicon;
}

// ---------------------------------------------------------------------------
// Subcommand plumbing
// ---------------------------------------------------------------------------

namespace cli {

namespace {

EmbedderConfig embedder_config(const RunConfig& cfg) {
    EmbedderConfig ec;
    ec.kind = cfg.embedder_kind == "remote" ? EmbedderKind::remote
                                            : EmbedderKind::deterministic_hash;
    ec.dim = cfg.embedder_dim;
    ec.endpoint = cfg.embedder_endpoint;
    ec.seed = cfg.embedder_seed;
    return ec;
}

std::vector<std::string> repo_texts(const Repository& repo) {
    std::vector<std::string> texts;
    texts.reserve(repo.size());
    for (const auto& doc : repo.documents) texts.push_back(doc.text);
    return texts;
}

// Char-ngram models train on the normal repository; when it is empty
// (document-free scenario) the avoid texts are the only corpus available.
std::vector<std::string> scorer_corpus(const Repository& normal, const Repository& avoid) {
    auto texts = repo_texts(normal);
    if (texts.empty()) texts = repo_texts(avoid);
    return texts;
}

FluencyScorer make_fluency_scorer(const RunConfig& cfg, const Repository& normal,
                                  const Repository& avoid) {
    if (cfg.scorer_kind == "remote") return FluencyScorer::remote(cfg.scorer_endpoint);
    auto corpus = scorer_corpus(normal, avoid);
    if (corpus.empty()) throw Error("char-ngram scorer has no training texts");
    return FluencyScorer::char_ngram(CharNgramModel::train(corpus, cfg.scorer_order));
}

SentenceScorer make_sentence_scorer(const RunConfig& cfg, const Repository& normal,
                                    const Repository& avoid) {
    if (cfg.scorer_kind == "remote") return SentenceScorer::from_remote(cfg.scorer_endpoint);
    auto corpus = scorer_corpus(normal, avoid);
    if (corpus.empty()) throw Error("char-ngram scorer has no training texts");
    return SentenceScorer::from_ngram(CharNgramModel::train(corpus, cfg.scorer_order));
}

GenerationClient generation_client(const RunConfig& cfg) {
    GenerationClient gen;
    gen.kind = cfg.generation_kind == "remote" ? GenClientKind::remote : GenClientKind::null;
    gen.endpoint = cfg.generation_endpoint;
    gen.max_tokens = cfg.generation_max_tokens;
    return gen;
}

RerankerState reranker_state(const RunConfig& cfg) {
    RerankerState state;
    state.theta = cfg.theta;
    state.eta0 = cfg.eta0;
    state.epsilon = cfg.epsilon;
    state.tau_avoid = cfg.tau_avoid;
    state.k_final = cfg.k_final;
    state.max_backtracks = cfg.max_backtracks;
    return state;
}

std::shared_ptr<Pipeline> make_pipeline(const RunConfig& cfg) {
    if (cfg.avoid_cache.empty()) {
        throw Error("avoid_cache is required (run `debiasrag ingest --repo avoid` first)");
    }
    Repository avoid = load_vectors(cfg.avoid_cache);
    Repository normal =
        cfg.normal_cache.empty() ? Repository{} : load_vectors(cfg.normal_cache);
    AttributeLexicon lexicon;
    if (!cfg.attribute_lexicon.empty()) {
        lexicon = load_attribute_lexicon(cfg.attribute_lexicon);
    }
    TagLexicon tags;
    if (!cfg.tag_lexicon.empty()) tags = load_tag_lexicon(cfg.tag_lexicon);

    PipelineConfig pcfg;
    pcfg.retrieval = RetrievalParams{cfg.k_avoid, cfg.k_normal};
    pcfg.reranker = reranker_state(cfg);
    pcfg.route_by_tag = cfg.route_by_tag;

    FluencyScorer scorer = make_fluency_scorer(cfg, normal, avoid);
    return std::make_shared<Pipeline>(Embedder(embedder_config(cfg)), std::move(avoid),
                                      std::move(normal), std::move(lexicon), std::move(scorer),
                                      std::move(tags), pcfg, generation_client(cfg));
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + path.string());
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::cout << content;
        if (content.empty() || content.back() != '\n') std::cout << "\n";
    } else {
        write_text_file(out_path, content);
    }
}

// Common config/override options shared by every subcommand.
struct CommonOpts {
    RunConfig flags;
    std::string config_path;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>>
        appliers;

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "TOML run configuration file");
        auto bind = [this](CLI::Option* opt, auto member) {
            appliers.emplace_back(opt, [member](RunConfig& dst, const RunConfig& src) {
                dst.*member = src.*member;
            });
        };
        bind(app.add_option("--embedder-kind", flags.embedder_kind,
                            "deterministic-hash or remote"),
             &RunConfig::embedder_kind);
        bind(app.add_option("--embedder-dim", flags.embedder_dim, "embedding dimension"),
             &RunConfig::embedder_dim);
        bind(app.add_option("--embedder-endpoint", flags.embedder_endpoint,
                            "remote embedder base URL"),
             &RunConfig::embedder_endpoint);
        bind(app.add_option("--embedder-seed", flags.embedder_seed, "deterministic hash seed"),
             &RunConfig::embedder_seed);
        bind(app.add_option("--scorer-kind", flags.scorer_kind, "char-ngram or remote"),
             &RunConfig::scorer_kind);
        bind(app.add_option("--scorer-order", flags.scorer_order, "char-ngram order (2-5)"),
             &RunConfig::scorer_order);
        bind(app.add_option("--scorer-endpoint", flags.scorer_endpoint,
                            "remote scorer base URL"),
             &RunConfig::scorer_endpoint);
        bind(app.add_option("--generation-kind", flags.generation_kind, "null or remote"),
             &RunConfig::generation_kind);
        bind(app.add_option("--generation-endpoint", flags.generation_endpoint,
                            "remote generation base URL"),
             &RunConfig::generation_endpoint);
        bind(app.add_option("--k-avoid", flags.k_avoid, "avoid-set retrieval size"),
             &RunConfig::k_avoid);
        bind(app.add_option("--k-normal", flags.k_normal, "base-corpus retrieval size"),
             &RunConfig::k_normal);
        bind(app.add_option("--k-final", flags.k_final, "final context count"),
             &RunConfig::k_final);
        bind(app.add_option("--tau-avoid", flags.tau_avoid, "avoid-similarity filter threshold"),
             &RunConfig::tau_avoid);
        bind(app.add_option("--eta0", flags.eta0, "initial streaming step size"),
             &RunConfig::eta0);
        bind(app.add_option("--alpha", flags.alpha, "biased-token suppression factor"),
             &RunConfig::alpha);
        bind(app.add_option("--lambda", flags.lambda, "questions sampled per iteration"),
             &RunConfig::lambda);
        bind(app.add_option("--seed", flags.seed, "RNG seed"), &RunConfig::seed);
        bind(app.add_flag("--route-by-tag", flags.route_by_tag,
                          "restrict A_q to avoid docs sharing the query's bias tag"),
             &RunConfig::route_by_tag);
        bind(app.add_option("--avoid-cache", flags.avoid_cache, "avoid vector cache path"),
             &RunConfig::avoid_cache);
        bind(app.add_option("--normal-cache", flags.normal_cache, "normal vector cache path"),
             &RunConfig::normal_cache);
        bind(app.add_option("--attribute-lexicon", flags.attribute_lexicon,
                            "paired substitution lexicon JSON"),
             &RunConfig::attribute_lexicon);
        bind(app.add_option("--tag-lexicon", flags.tag_lexicon, "word->class tag lexicon JSON"),
             &RunConfig::tag_lexicon);
    }

    RunConfig resolve() const {
        RunConfig cfg =
            config_path.empty() ? RunConfig{} : RunConfig::from_toml_file(config_path);
        for (const auto& [opt, apply] : appliers) {
            if (opt->count() > 0) apply(cfg, flags);
        }
        cfg.validate();
        return cfg;
    }
};

int run_ingest(const RunConfig& cfg, const std::string& input, const std::string& repo_kind,
               std::string out_path) {
    const DocKind kind = repo_kind == "avoid" ? DocKind::avoid : DocKind::normal;
    if (out_path.empty()) {
        out_path = std::filesystem::path(input).replace_extension(".dbrg").string();
    }
    Embedder embedder(embedder_config(cfg));
    std::vector<std::string> warnings;
    Repository repo = ingest(input, kind, embedder, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    save_vectors(repo, out_path);
    std::cerr << "ingested " << repo.size() << " " << repo_kind << " documents (dim "
              << repo.dim << ") -> " << out_path << "\n";
    return 0;
}

int run_query(const RunConfig& cfg, const std::string& text, bool learn,
              const std::string& trace_path, const std::string& out_path) {
    auto pipeline = make_pipeline(cfg);
    PipelineResult result = pipeline->answer_query(text, learn);
    if (!trace_path.empty()) {
        write_text_file(trace_path, result.trace.to_json().dump() + "\n");
    }
    emit(out_path, result.to_json().dump(2));
    return 0;
}

int run_synth(const RunConfig& cfg, const std::string& text, const std::string& out_path) {
    // Fair-context synthesis only: route, synthesize, retrieve, pool.
    if (cfg.avoid_cache.empty()) throw Error("avoid_cache is required");
    Repository avoid = load_vectors(cfg.avoid_cache);
    Repository normal =
        cfg.normal_cache.empty() ? Repository{} : load_vectors(cfg.normal_cache);
    AttributeLexicon lexicon;
    if (!cfg.attribute_lexicon.empty()) {
        lexicon = load_attribute_lexicon(cfg.attribute_lexicon);
    }
    Embedder embedder(embedder_config(cfg));
    FluencyScorer scorer = make_fluency_scorer(cfg, normal, avoid);

    Query q;
    q.text = text;
    q.embedding = embedder.embed(text);
    if (q.embedding.degenerate()) throw Error("query text has no tokens");
    if (!cfg.tag_lexicon.empty()) {
        q.tag = classify_bias_tag(text, load_tag_lexicon(cfg.tag_lexicon));
    }

    RetrievalParams params{cfg.k_avoid, cfg.k_normal};
    TopKResult routed = route_avoid(q, avoid, params);
    std::vector<Document> avoid_subset;
    nlohmann::json avoid_json = nlohmann::json::array();
    for (const auto& hit : routed.hits) {
        avoid_subset.push_back(*hit.doc);
        avoid_json.push_back({{"id", hit.doc->id}, {"similarity", hit.similarity}});
    }

    std::vector<std::string> warnings;
    auto fair = synthesize_fair(avoid_subset, q, lexicon, scorer, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    nlohmann::json fair_json = nlohmann::json::array();
    for (const auto& f : fair) {
        fair_json.push_back({{"source_id", f.source_id},
                             {"text", f.text},
                             {"perplexity", f.perplexity},
                             {"variant_index", f.variant_index}});
    }
    nlohmann::json pool_json = nlohmann::json::array();
    if (cfg.k_normal > 0 && !normal.empty()) {
        for (const auto& hit : top_k(q.embedding, normal, cfg.k_normal).hits) {
            pool_json.push_back(hit.doc->id);
        }
    }
    for (const auto& f : fair) {
        pool_json.push_back("fair::" + f.source_id + "::" + std::to_string(f.variant_index));
    }

    emit(out_path, nlohmann::json{{"query", q.text},
                                  {"tag", q.tag},
                                  {"avoid", avoid_json},
                                  {"fair", fair_json},
                                  {"pool_ids", pool_json}}
                       .dump(2));
    return 0;
}

int run_optimize(const RunConfig& cfg, const std::string& questions_path, int iters,
                 const std::string& selection, const std::string& trace_path,
                 const std::string& out_path) {
    auto pipeline = make_pipeline(cfg);
    Repository avoid = load_vectors(cfg.avoid_cache);
    Repository normal =
        cfg.normal_cache.empty() ? Repository{} : load_vectors(cfg.normal_cache);
    SentenceScorer scorer = make_sentence_scorer(cfg, normal, avoid);

    const auto questions = load_stereoset(questions_path);
    const SnapshotSelection sel = selection == "icat" ? SnapshotSelection::max_icat
                                                      : SnapshotSelection::min_ss_deviation;
    OptimizeResult result =
        optimize_loop(questions, cfg.lambda, iters, *pipeline, scorer, cfg.seed, sel);

    if (!trace_path.empty()) {
        std::string lines;
        for (const auto& record : result.history) {
            lines += record.to_json().dump();
            lines.push_back('\n');
        }
        write_text_file(trace_path, lines);
    }
    emit(out_path, nlohmann::json{{"iterations", iters},
                                  {"lambda", cfg.lambda},
                                  {"selection", selection},
                                  {"best_iteration", result.best_iteration},
                                  {"best_theta", result.best_state.theta},
                                  {"final_theta", result.final_state.theta}}
                       .dump(2));
    return 0;
}

int run_eval(const RunConfig& cfg, const std::string& benchmark, const std::string& data_path,
             bool with_context, const std::string& out_path) {
    nlohmann::json report{{"lms", nullptr},
                          {"ss", nullptr},
                          {"icat", nullptr},
                          {"cps", nullptr},
                          {"seat", nlohmann::json::object()}};

    if (benchmark == "stereoset" || benchmark == "crows") {
        Repository avoid =
            cfg.avoid_cache.empty() ? Repository{} : load_vectors(cfg.avoid_cache);
        Repository normal =
            cfg.normal_cache.empty() ? Repository{} : load_vectors(cfg.normal_cache);
        SentenceScorer scorer = make_sentence_scorer(cfg, normal, avoid);

        if (benchmark == "stereoset") {
            const auto items = load_stereoset(data_path);
            ContextProvider provider;
            std::shared_ptr<Pipeline> pipeline;
            if (with_context) {
                pipeline = make_pipeline(cfg);
                provider = [pipeline](const StereoItem& item) {
                    PipelineResult res = pipeline->answer_query(item.context, /*learn=*/false);
                    std::string joined;
                    for (const auto& c : res.selected) {
                        if (!joined.empty()) joined += "\n";
                        joined += c.doc.text;
                    }
                    return joined;
                };
            }
            const StereoScores s = eval_stereoset(items, scorer, provider);
            report["lms"] = s.lms;
            report["ss"] = s.ss;
            report["icat"] = s.icat;
        } else {
            const CrowsScore c = eval_crows(load_crows(data_path), scorer);
            report["cps"] = c.cps;
        }
    } else if (benchmark == "seat") {
        std::ifstream in(data_path);
        if (!in) throw Error("cannot open " + data_path);
        nlohmann::json tests = nlohmann::json::parse(in);
        if (!tests.is_object()) {
            throw Error(data_path + ": expected {test-name: {X, Y, A, B}}");
        }
        Embedder embedder(embedder_config(cfg));
        for (const auto& [name, lists] : tests.items()) {
            const double d = seat_effect_size(lists.at("X").get<std::vector<std::string>>(),
                                              lists.at("Y").get<std::vector<std::string>>(),
                                              lists.at("A").get<std::vector<std::string>>(),
                                              lists.at("B").get<std::vector<std::string>>(),
                                              embedder);
            report["seat"][name] = d;
        }
    } else {
        throw Error("unknown benchmark \"" + benchmark +
                    "\" (expected stereoset, crows, or seat)");
    }

    // Plain-text table of the computed metrics only.
    std::cerr << "metric  value\n------  --------\n";
    auto print_row = [](const std::string& name, double value) {
        std::string padded = name;
        padded.resize(std::max<std::size_t>(8, name.size() + 1), ' ');
        std::fprintf(stderr, "%s%.4f\n", padded.c_str(), value);
    };
    for (const auto& [key, label] :
         std::vector<std::pair<std::string, std::string>>{
             {"lms", "LMS"}, {"ss", "SS"}, {"icat", "ICAT"}, {"cps", "CP-S"}}) {
        if (!report[key].is_null()) print_row(label, report[key].get<double>());
    }
    for (const auto& [name, d] : report["seat"].items()) print_row(name, d.get<double>());

    emit(out_path, report.dump(2));
    return 0;
}

int run_bench(const RunConfig& cfg, const std::string& text, int repeat) {
    auto pipeline = make_pipeline(cfg);
    StageTimings total;
    for (int i = 0; i < repeat; ++i) {
        PipelineResult res = pipeline->answer_query(text, /*learn=*/false);
        total.embed_ms += res.timings.embed_ms;
        total.route_ms += res.timings.route_ms;
        total.synth_ms += res.timings.synth_ms;
        total.retrieve_ms += res.timings.retrieve_ms;
        total.rerank_ms += res.timings.rerank_ms;
        total.generate_ms += res.timings.generate_ms;
    }
    auto row = [repeat](const char* name, double ms) {
        std::printf("%-10s %10.3f ms\n", name, ms / repeat);
    };
    std::printf("stage      mean over %d runs\n", repeat);
    row("embed", total.embed_ms);
    row("route", total.route_ms);
    row("synth", total.synth_ms);
    row("retrieve", total.retrieve_ms);
    row("rerank", total.rerank_ms);
    row("generate", total.generate_ms);
    return 0;
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"debiasrag: fairness-aware retrieval, synthesis, and reranking"};
    app.require_subcommand(1);

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "embed a JSONL document file into a vector cache");
    std::string ingest_input, ingest_repo, ingest_out;
    ingest_cmd->add_option("input", ingest_input, "JSONL document file")->required();
    ingest_cmd->add_option("--repo", ingest_repo, "avoid or normal")
        ->required()
        ->check(CLI::IsMember({"avoid", "normal"}));
    ingest_cmd->add_option("--out", ingest_out, "cache output path (default: input with .dbrg)");
    CommonOpts ingest_opts;
    ingest_opts.attach(*ingest_cmd);

    // query
    auto* query_cmd = app.add_subcommand("query", "answer one query end to end");
    std::string query_text, query_trace, query_out;
    bool query_learn = false;
    query_cmd->add_option("text", query_text, "query text")->required();
    query_cmd->add_flag("--learn", query_learn, "apply the streaming theta update");
    query_cmd->add_option("--trace", query_trace, "write the rerank trace JSONL here");
    query_cmd->add_option("--out", query_out, "write the result JSON here (default stdout)");
    CommonOpts query_opts;
    query_opts.attach(*query_cmd);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "run fair-context synthesis only");
    std::string synth_text, synth_out;
    synth_cmd->add_option("text", synth_text, "query text")->required();
    synth_cmd->add_option("--out", synth_out, "write the result JSON here (default stdout)");
    CommonOpts synth_opts;
    synth_opts.attach(*synth_cmd);

    // optimize
    auto* opt_cmd = app.add_subcommand("optimize", "run the lambda-question optimization driver");
    std::string opt_questions, opt_select = "ss", opt_trace, opt_out;
    int opt_iters = 50;
    opt_cmd->add_option("--questions", opt_questions, "StereoSet-shaped JSONL")->required();
    opt_cmd->add_option("--iters", opt_iters, "iteration count");
    opt_cmd->add_option("--select", opt_select, "snapshot selection: ss or icat")
        ->check(CLI::IsMember({"ss", "icat"}));
    opt_cmd->add_option("--trace", opt_trace, "write the per-iteration history JSONL here");
    opt_cmd->add_option("--out", opt_out, "write the summary JSON here (default stdout)");
    CommonOpts opt_opts;
    opt_opts.attach(*opt_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run a bias benchmark");
    std::string eval_benchmark, eval_data, eval_out;
    bool eval_with_context = false;
    eval_cmd->add_option("--benchmark", eval_benchmark, "stereoset, crows, or seat")
        ->required()
        ->check(CLI::IsMember({"stereoset", "crows", "seat"}));
    eval_cmd->add_option("data", eval_data, "benchmark data file")->required();
    eval_cmd->add_flag("--with-context", eval_with_context,
                       "prepend retrieved contexts when scoring (stereoset)");
    eval_cmd->add_option("--out", eval_out, "write the report JSON here (default stdout)");
    CommonOpts eval_opts;
    eval_opts.attach(*eval_cmd);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "time the pipeline stages");
    std::string bench_text;
    int bench_repeat = 10;
    bench_cmd->add_option("text", bench_text, "query text")->required();
    bench_cmd->add_option("--repeat", bench_repeat, "repetitions")->check(CLI::PositiveNumber);
    CommonOpts bench_opts;
    bench_opts.attach(*bench_cmd);

    std::vector<const char*> argv;
    argv.push_back("debiasrag");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (ingest_cmd->parsed()) {
            return run_ingest(ingest_opts.resolve(), ingest_input, ingest_repo, ingest_out);
        }
        if (query_cmd->parsed()) {
            return run_query(query_opts.resolve(), query_text, query_learn, query_trace,
                             query_out);
        }
        if (synth_cmd->parsed()) {
            return run_synth(synth_opts.resolve(), synth_text, synth_out);
        }
        if (opt_cmd->parsed()) {
            return run_optimize(opt_opts.resolve(), opt_questions, opt_iters, opt_select,
                                opt_trace, opt_out);
        }
        if (eval_cmd->parsed()) {
            return run_eval(eval_opts.resolve(), eval_benchmark, eval_data, eval_with_context,
                            eval_out);
        }
        if (bench_cmd->parsed()) {
            return run_bench(bench_opts.resolve(), bench_text, bench_repeat);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace cli

} // namespace debiasrag
