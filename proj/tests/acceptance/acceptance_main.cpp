// Acceptance suite: one criterion per section, one pass/fail line each.
// Exits non-zero if any criterion fails its checks or its runtime budget.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "debiasrag/cli.hpp"
#include "debiasrag/counterfactual.hpp"
#include "debiasrag/errors.hpp"
#include "debiasrag/evalharness.hpp"
#include "debiasrag/pipeline.hpp"
#include "debiasrag/rerank.hpp"
#include "debiasrag/retrieval.hpp"

using namespace debiasrag;

namespace {

struct Check {
    int assertions = 0;
    std::vector<std::string> failures;

    void require(bool ok, const std::string& message) {
        ++assertions;
        if (!ok) failures.push_back(message);
    }
};

struct Criterion {
    int id;
    std::string name;
    double limit_ms;
    std::function<void(Check&)> body;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// --------------------------------------------------------------------------
// Shared synthetic-pool helpers
// --------------------------------------------------------------------------

CandidatePool random_pool(std::mt19937_64& rng, std::size_t size) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CandidatePool pool;
    pool.query.text = "synthetic";
    for (std::size_t i = 0; i < size; ++i) {
        Candidate c;
        c.doc.id = "c" + std::to_string(i);
        c.s_q = unit(rng);
        c.s_a = unit(rng);
        c.s_q_norm = unit(rng);
        c.s_a_norm = unit(rng);
        pool.members.push_back(std::move(c));
    }
    return pool;
}

std::array<double, 2> random_theta(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double t = unit(rng);
    return {t, 1.0 - t};
}

std::vector<float> random_unit_vec(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> raw(dim);
    double sq = 0.0;
    for (auto& v : raw) {
        v = normal(rng);
        sq += v * v;
    }
    if (sq == 0.0) raw[0] = 1.0, sq = 1.0;
    std::vector<float> out(dim);
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(raw[i] * inv);
    return out;
}

// Raw listwise objective at arbitrary theta (finite-difference probe).
double raw_loss(const CandidatePool& pool, const std::array<double, 2>& theta) {
    const auto y = target_distribution(pool, 1e-9);
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const auto& c : pool.members) {
        scores.push_back(theta[0] * c.s_q_norm + theta[1] * c.s_a_norm);
    }
    const double m = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - m);
    const double lse = m + std::log(z);
    double loss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) loss -= y[i] * (scores[i] - lse);
    return loss;
}

// --------------------------------------------------------------------------
// Criterion bodies
// --------------------------------------------------------------------------

void criterion_icat(Check& check) {
    const struct {
        double lms, ss, published;
    } rows[] = {{82.51, 57.60, 70.02}, {91.05, 49.72, 90.53}, {92.15, 53.85, 85.05}};
    for (const auto& row : rows) {
        const double got = icat(row.lms, row.ss);
        check.require(std::abs(got - row.published) <= 0.1,
                      "icat(" + fmt(row.lms) + ", " + fmt(row.ss) + ") = " + fmt(got) +
                          ", published " + fmt(row.published));
    }
}

void criterion_gradient(Check& check) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> size_dist(2, 32);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        auto pool = random_pool(rng, size_dist(rng));
        const auto theta = random_theta(rng);
        const auto lg = listwise_loss(pool, theta, 1e-9);

        std::array<double, 2> fd{};
        for (int axis = 0; axis < 2; ++axis) {
            auto plus = theta;
            auto minus = theta;
            plus[axis] += h;
            minus[axis] -= h;
            fd[axis] = (raw_loss(pool, plus) - raw_loss(pool, minus)) / (2.0 * h);
        }
        const double err = std::hypot(fd[0] - lg.grad[0], fd[1] - lg.grad[1]);
        const double scale = std::max(std::hypot(lg.grad[0], lg.grad[1]), 1e-8);
        check.require(err / scale < 1e-5,
                      "trial " + std::to_string(trial) + ": relative gradient error " +
                          fmt(err / scale));
    }
}

void criterion_simplex_safety(Check& check) {
    std::mt19937_64 rng(103);
    std::uniform_int_distribution<std::size_t> size_dist(2, 24);
    RerankerState state;
    state.eta0 = 0.2;
    for (int step = 0; step < 1000; ++step) {
        auto pool = random_pool(rng, size_dist(rng));
        const auto outcome = streaming_update(pool, state);
        state = outcome.state;
        check.require(state.theta[0] >= 0.0 && state.theta[1] >= 0.0,
                      "step " + std::to_string(step) + ": negative theta component");
        check.require(std::abs(state.theta[0] + state.theta[1] - 1.0) <= 1e-9,
                      "step " + std::to_string(step) + ": theta sum off the simplex");
        if (outcome.accepted) {
            check.require(outcome.loss_after <= outcome.loss_before,
                          "step " + std::to_string(step) + ": accepted step raised the loss");
        }
    }
}

void criterion_projection(Check& check) {
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::array<double, 2> v{coord(rng), coord(rng)};
        const auto proj = project_simplex(v);
        double best_t = 0.0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 10000; ++i) {
            const double t = i * 1e-4;
            const double d = (t - v[0]) * (t - v[0]) + (1.0 - t - v[1]) * (1.0 - t - v[1]);
            if (d < best_d) {
                best_d = d;
                best_t = t;
            }
        }
        check.require(std::abs(proj[0] - best_t) <= 2e-4 &&
                          std::abs(proj[1] - (1.0 - best_t)) <= 2e-4,
                      "projection of (" + fmt(v[0]) + ", " + fmt(v[1]) +
                          ") differs from the grid minimizer");
    }
}

void criterion_retrieval(Check& check) {
    std::mt19937_64 rng(109);
    std::uniform_int_distribution<int> size_dist(1, 64);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = size_dist(rng);
        Repository repo;
        repo.dim = 8;
        for (int i = 0; i < n; ++i) {
            Document d;
            d.id = "doc" + std::to_string(i);
            d.kind = DocKind::normal;
            d.embedding.values = random_unit_vec(rng, 8);
            repo.documents.push_back(std::move(d));
        }
        std::sort(repo.documents.begin(), repo.documents.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        EmbeddingVector q{random_unit_vec(rng, 8)};

        // Independent full-sort oracle.
        std::vector<std::pair<double, std::string>> oracle;
        for (const auto& d : repo.documents) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 8; ++k) {
                dot += static_cast<double>(q.values[k]) * d.embedding.values[k];
            }
            oracle.emplace_back(std::clamp(dot, -1.0, 1.0), d.id);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });

        for (int k = 1; k <= n; ++k) {
            const auto result = top_k(q, repo, k);
            bool match = result.hits.size() == static_cast<std::size_t>(k);
            for (int i = 0; match && i < k; ++i) {
                match = result.hits[i].doc->id == oracle[i].second;
            }
            check.require(match, "trial " + std::to_string(trial) + ", k = " +
                                     std::to_string(k) + ": top_k != sort prefix");
        }
    }
}

void criterion_counterfactual(Check& check) {
    std::vector<AttributeLexicon::Pair> pairs;
    for (int i = 0; i < 20; ++i) {
        pairs.push_back({"left" + std::to_string(i), "right" + std::to_string(i),
                         i % 2 ? "classa" : "classb"});
    }
    const AttributeLexicon lex(std::move(pairs));

    std::vector<std::string> alphabet;
    for (int i = 0; i < 20; ++i) {
        alphabet.push_back("left" + std::to_string(i));
        alphabet.push_back("right" + std::to_string(i));
    }
    for (int i = 0; i < 20; ++i) alphabet.push_back("noise" + std::to_string(i));

    std::mt19937_64 rng(113);
    std::uniform_int_distribution<std::size_t> len_dist(0, 30);
    std::uniform_int_distribution<std::size_t> word_dist(0, alphabet.size() - 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::string> seq;
        const std::size_t len = len_dist(rng);
        for (std::size_t i = 0; i < len; ++i) seq.push_back(alphabet[word_dist(rng)]);
        const auto swapped = substitute(seq, lex);
        check.require(swapped.size() == seq.size(),
                      "trial " + std::to_string(trial) + ": length changed");
        check.require(substitute(swapped, lex) == seq,
                      "trial " + std::to_string(trial) + ": substitution not involutive");
    }

    const auto scorer =
        FluencyScorer::char_ngram(CharNgramModel::train({"left0 right0 noise one two"}, 3));
    std::uniform_int_distribution<std::size_t> cand_dist(1, 6);
    std::uniform_int_distribution<std::size_t> clen_dist(1, 8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<std::string>> candidates;
        const std::size_t n = cand_dist(rng);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::string> cand;
            const std::size_t len = clen_dist(rng);
            for (std::size_t k = 0; k < len; ++k) cand.push_back(alphabet[word_dist(rng)]);
            candidates.push_back(std::move(cand));
        }
        const auto out = refine(candidates, scorer);
        bool is_member = out.index < candidates.size();
        if (is_member) {
            std::string joined;
            for (std::size_t k = 0; k < candidates[out.index].size(); ++k) {
                if (k) joined += " ";
                joined += candidates[out.index][k];
            }
            is_member = joined == out.text;
        }
        check.require(is_member,
                      "trial " + std::to_string(trial) + ": refine fabricated a candidate");
    }
}

void criterion_filter(Check& check) {
    std::mt19937_64 rng(127);
    std::uniform_real_distribution<double> tau_dist(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        CandidatePool pool;
        pool.query.text = "q";
        pool.query.embedding.values = random_unit_vec(rng, 8);
        for (int i = 0; i < 3; ++i) {
            Document a;
            a.id = "a" + std::to_string(i);
            a.kind = DocKind::avoid;
            a.embedding.values = random_unit_vec(rng, 8);
            pool.avoid_set.push_back(std::move(a));
        }
        for (int i = 0; i < 12; ++i) {
            Candidate c;
            c.doc.id = "c" + std::to_string(i);
            c.doc.kind = DocKind::normal;
            c.doc.embedding.values = random_unit_vec(rng, 8);
            pool.members.push_back(std::move(c));
        }
        score_pool(pool);
        const double tau = tau_dist(rng);
        CandidatePool kept;
        try {
            kept = filter_pool(pool, tau);
        } catch (const EmptyPoolError&) {
            continue; // everything above tau: nothing to verify
        }
        for (const auto& c : kept.members) {
            // Independent recomputation of the max avoid-similarity.
            double max_sim = 0.0;
            for (const auto& a : pool.avoid_set) {
                double dot = 0.0;
                for (std::size_t k = 0; k < 8; ++k) {
                    dot += static_cast<double>(c.doc.embedding.values[k]) *
                           a.embedding.values[k];
                }
                max_sim = std::max(max_sim, std::clamp(dot, -1.0, 1.0));
            }
            check.require(max_sim <= tau, "trial " + std::to_string(trial) +
                                              ": kept candidate has max sim " + fmt(max_sim) +
                                              " > tau " + fmt(tau));
        }
    }
}

void criterion_convexity(Check& check) {
    std::mt19937_64 rng(131);
    std::uniform_int_distribution<std::size_t> size_dist(2, 24);
    for (int trial = 0; trial < 200; ++trial) {
        auto pool = random_pool(rng, size_dist(rng));
        const auto a = random_theta(rng);
        const auto b = random_theta(rng);
        const std::array<double, 2> mid{(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0};
        const double la = listwise_loss(pool, a, 1e-9).loss;
        const double lb = listwise_loss(pool, b, 1e-9).loss;
        const double lm = listwise_loss(pool, mid, 1e-9).loss;
        check.require(lm <= (la + lb) / 2.0 + 1e-9,
                      "trial " + std::to_string(trial) + ": midpoint inequality violated");
    }
}

// Synthetic corpus where avoid-like contexts push option preference toward
// stereotypes and fair-synth contexts neutralize it. Embeddings come from a
// loopback stub so the pool geometry is exact.
void criterion_debias_trend(Check& check) {
    std::map<std::string, std::vector<double>> vectors;
    const std::string avoid_text = "biasmark story of bias";
    const std::string fair_text = "fairmark story of bias"; // full substitution
    vectors[avoid_text] = {0.0, 1.0, 0.0, 0.0};
    vectors[fair_text] = {0.1, 0.05, 0.0, std::sqrt(1.0 - 0.01 - 0.0025)};
    vectors["calm neutral words here"] = {0.5, 0.0, std::sqrt(0.75), 0.0};
    for (const auto* name : {"two", "three", "four", "five"}) {
        vectors[std::string("biaslike text ") + name] = {0.75, 0.6, std::sqrt(0.0775), 0.0};
    }
    std::vector<StereoItem> items;
    for (int i = 0; i < 8; ++i) {
        StereoItem item;
        item.context = "story prompt " + std::to_string(i);
        item.stereotype = "[S] option";
        item.anti_stereotype = "[A] option";
        item.unrelated = "[U] option";
        item.domain = "gender";
        items.push_back(item);
        vectors[item.context] = {1.0, 0.0, 0.0, 0.0};
    }

    httplib::Server server;
    server.Post("/embed", [&vectors](const httplib::Request& req, httplib::Response& res) {
        const auto texts = nlohmann::json::parse(req.body).at("texts");
        nlohmann::json out = nlohmann::json::array();
        for (const auto& t : texts) {
            auto it = vectors.find(t.get<std::string>());
            if (it == vectors.end()) {
                res.status = 500;
                return;
            }
            out.push_back(it->second);
        }
        res.set_content(nlohmann::json{{"vectors", out}, {"dim", 4}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    try {
        EmbedderConfig ecfg;
        ecfg.kind = EmbedderKind::remote;
        ecfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
        ecfg.dim = 4;
        Embedder embedder(ecfg);

        auto make_repo = [](std::vector<Document> docs, RepoName name) {
            Repository repo;
            repo.name = name;
            repo.documents = std::move(docs);
            std::sort(repo.documents.begin(), repo.documents.end(),
                      [](const auto& a, const auto& b) { return a.id < b.id; });
            repo.dim = 4;
            return repo;
        };
        auto make_document = [&embedder](std::string id, std::string text, DocKind kind) {
            Document d;
            d.id = std::move(id);
            d.text = std::move(text);
            d.kind = kind;
            d.embedding = embedder.embed(d.text);
            return d;
        };

        Repository avoid =
            make_repo({make_document("a1", avoid_text, DocKind::avoid)}, RepoName::A);
        std::vector<Document> normal_docs{
            make_document("n1", "calm neutral words here", DocKind::normal)};
        int idx = 2;
        for (const auto* name : {"two", "three", "four", "five"}) {
            normal_docs.push_back(make_document("n" + std::to_string(idx++),
                                                std::string("biaslike text ") + name,
                                                DocKind::normal));
        }
        Repository normal = make_repo(std::move(normal_docs), RepoName::D);

        AttributeLexicon lexicon({{"biasmark", "fairmark", "marker"}});
        FluencyScorer fluency = FluencyScorer::char_ngram(
            CharNgramModel::train({"calm neutral words here", "biaslike text two"}, 3));

        PipelineConfig pcfg;
        pcfg.retrieval.k_avoid = 1;
        pcfg.retrieval.k_normal = 5;
        pcfg.reranker.k_final = 4;
        pcfg.reranker.tau_avoid = 0.9;
        pcfg.reranker.eta0 = 0.1;
        Pipeline pipeline(std::move(embedder), std::move(avoid), std::move(normal),
                          std::move(lexicon), std::move(fluency), TagLexicon{}, pcfg,
                          GenerationClient{});

        // Stereotype wins on bare contexts; a fair-synth context neutralizes
        // the preference (tie), mirroring the intended mitigation.
        auto scorer = SentenceScorer::from_function([](const std::string& text) {
            const bool fair_ctx = text.find("fairmark") != std::string::npos;
            if (text.find("[S]") != std::string::npos) return fair_ctx ? 0.0 : 1.0;
            if (text.find("[A]") != std::string::npos) return 0.0;
            return -1.0;
        });

        const double theta2_initial = pipeline.state().theta[1];
        const auto result = optimize_loop(items, /*lambda=*/3, /*iters=*/50, pipeline, scorer,
                                          /*seed=*/21);

        check.require(result.history.size() == 50, "expected 50 history records");
        const double initial_dev = std::abs(result.history.front().running_ss - 50.0);
        const double final_dev = std::abs(result.history.back().running_ss - 50.0);
        check.require(result.history.front().ss > 50.0,
                      "construction should start stereotype-skewed, got SS = " +
                          fmt(result.history.front().ss));
        check.require(final_dev <= initial_dev, "running |SS - 50| grew: initial " +
                                                    fmt(initial_dev) + ", final " +
                                                    fmt(final_dev));
        check.require(result.best_state.theta[1] >= theta2_initial,
                      "selected snapshot theta2 " + fmt(result.best_state.theta[1]) +
                          " fell below its initial value " + fmt(theta2_initial));
    } catch (...) {
        server.stop();
        server_thread.join();
        throw;
    }
    server.stop();
    server_thread.join();
}

void criterion_suppression(Check& check) {
    std::mt19937_64 rng(137);
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(16);
        double z = 0.0;
        for (auto& v : p) {
            v = unit(rng);
            z += v;
        }
        for (auto& v : p) v /= z;
        const std::set<std::size_t> biased{0, 3, 7, 11};

        const auto identity = suppress_distribution(p, biased, 1.0);
        check.require(identity == p, "alpha = 1 is not the identity");

        const auto masked = suppress_distribution(p, biased, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < masked.size(); ++i) {
            total += masked[i];
            if (biased.count(i)) {
                check.require(masked[i] == 0.0, "alpha = 0 left mass on a biased token");
            } else {
                check.require(masked[i] > 0.0, "alpha = 0 zeroed a non-biased token");
            }
        }
        check.require(std::abs(total - 1.0) <= 1e-12,
                      "masked distribution sums to " + fmt(total));
    }
}

void criterion_determinism(Check& check) {
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::temp_directory_path() / ("debiasrag_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    auto write = [](const fs::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    };
    auto slurp = [](const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };

    write(dir / "avoid.jsonl",
          R"({"id": "a1", "text": "he gamma delta", "tags": ["gender"]})" "\n"
          R"({"id": "a2", "text": "he writes his code", "tags": ["gender"]})" "\n");
    write(dir / "normal.jsonl",
          R"({"id": "n1", "text": "he gamma delta pad1"})" "\n"
          R"({"id": "n2", "text": "he gamma delta pad2"})" "\n"
          R"({"id": "n3", "text": "epsilon calm far away"})" "\n");
    write(dir / "lexicon.json", R"([["he","she","gender"],["his","her","gender"]])");
    write(dir / "questions.jsonl",
          R"({"context": "gamma delta epsilon", "stereotype": "he cooks", "anti_stereotype": "she codes", "unrelated": "rocks fall", "domain": "gender"})" "\n"
          R"({"context": "gamma delta code", "stereotype": "he leads", "anti_stereotype": "she leads", "unrelated": "birds fly", "domain": "gender"})" "\n");

    RunConfig cfg;
    cfg.avoid_cache = (dir / "avoid.dbrg").string();
    cfg.normal_cache = (dir / "normal.dbrg").string();
    cfg.attribute_lexicon = (dir / "lexicon.json").string();
    write(dir / "config.toml", cfg.to_toml_string());
    const std::string config = (dir / "config.toml").string();

    check.require(cli::dispatch({"ingest", "--repo", "avoid", "--config", config, "--out",
                                 (dir / "avoid.dbrg").string(),
                                 (dir / "avoid.jsonl").string()}) == 0,
                  "avoid ingest failed");
    check.require(cli::dispatch({"ingest", "--repo", "normal", "--config", config, "--out",
                                 (dir / "normal.dbrg").string(),
                                 (dir / "normal.jsonl").string()}) == 0,
                  "normal ingest failed");

    for (int run = 1; run <= 2; ++run) {
        const std::string trace = (dir / ("query_trace_" + std::to_string(run))).string();
        check.require(cli::dispatch({"query", "gamma delta epsilon", "--learn", "--config",
                                     config, "--trace", trace, "--out",
                                     (dir / "query_out.json").string()}) == 0,
                      "query run " + std::to_string(run) + " failed");
    }
    check.require(slurp(dir / "query_trace_1") == slurp(dir / "query_trace_2"),
                  "query trace files differ between identical runs");

    for (int run = 1; run <= 2; ++run) {
        const std::string trace = (dir / ("opt_trace_" + std::to_string(run))).string();
        check.require(cli::dispatch({"optimize", "--questions",
                                     (dir / "questions.jsonl").string(), "--iters", "5",
                                     "--config", config, "--trace", trace, "--out",
                                     (dir / "opt_out.json").string()}) == 0,
                      "optimize run " + std::to_string(run) + " failed");
    }
    check.require(slurp(dir / "opt_trace_1") == slurp(dir / "opt_trace_2"),
                  "optimize trace files differ between identical runs");

    std::error_code ec;
    fs::remove_all(dir, ec);
}

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "icat arithmetic matches the published tables", 1.0, criterion_icat},
        {2, "analytic gradient matches central finite differences", 1000.0,
         criterion_gradient},
        {3, "theta stays simplex-safe over 1000 streaming updates", 5000.0,
         criterion_simplex_safety},
        {4, "simplex projection matches the grid-search oracle", 5000.0,
         criterion_projection},
        {5, "top_k equals the full-sort prefix for every k", 2000.0, criterion_retrieval},
        {6, "substitution algebra and refine membership", 1000.0, criterion_counterfactual},
        {7, "filter soundness under independent recomputation", 1000.0, criterion_filter},
        {8, "listwise loss midpoint convexity", 2000.0, criterion_convexity},
        {9, "synthetic end-to-end debias trend", 30000.0, criterion_debias_trend},
        {10, "suppression identity and masking", 1.0, criterion_suppression},
        {11, "query and optimize traces are byte-identical across runs", 10000.0,
         criterion_determinism},
    };

    int failed = 0;
    for (const auto& criterion : criteria) {
        Check check;
        std::string error;
        const auto start = std::chrono::steady_clock::now();
        try {
            criterion.body(check);
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();

        const bool in_budget = ms < criterion.limit_ms;
        const bool ok = error.empty() && check.failures.empty() && in_budget;
        std::printf("[%s] %2d  %s  (%.2f ms, %d checks)\n", ok ? "PASS" : "FAIL",
                    criterion.id, criterion.name.c_str(), ms, check.assertions);
        if (!error.empty()) std::printf("         exception: %s\n", error.c_str());
        if (!in_budget) {
            std::printf("         runtime %.2f ms exceeds budget %.2f ms\n", ms,
                        criterion.limit_ms);
        }
        for (std::size_t i = 0; i < check.failures.size() && i < 5; ++i) {
            std::printf("         %s\n", check.failures[i].c_str());
        }
        if (check.failures.size() > 5) {
            std::printf("         ... and %zu more failures\n", check.failures.size() - 5);
        }
        if (!ok) ++failed;
    }

    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
                criteria.size());
    return failed == 0 ? 0 : 1;
}
