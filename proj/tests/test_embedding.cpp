#include <cmath>
#include <random>

#include "doctest.h"

#include "debiasrag/embedding.hpp"
#include "debiasrag/errors.hpp"
#include "support.hpp"

using namespace debiasrag;

namespace {

EmbeddingVector vec(std::vector<float> values) {
    return EmbeddingVector{std::move(values)};
}

Embedder det_embedder(std::size_t dim = 16, std::uint64_t seed = 0) {
    EmbedderConfig cfg;
    cfg.kind = EmbedderKind::deterministic_hash;
    cfg.dim = dim;
    cfg.seed = seed;
    return Embedder(cfg);
}

} // namespace

TEST_CASE("deterministic embedder is a pure function of (text, seed, dim)") {
    auto e = det_embedder();
    auto a = e.embed("The doctor said he would help");
    auto b = e.embed("The doctor said he would help");
    CHECK(a == b);
}

TEST_CASE("changing the seed moves token buckets") {
    // Derived by running the embedder twice with different seeds.
    auto v0 = det_embedder(8, 0).embed("a");
    auto v1 = det_embedder(8, 1).embed("a");
    CHECK(v0.dim() == 8);
    CHECK_FALSE(v0 == v1);
}

TEST_CASE("embedding is L2-normalized") {
    auto v = det_embedder().embed("several distinct tokens in this text");
    double sq = 0.0;
    for (float x : v.values) sq += static_cast<double>(x) * x;
    CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-6);
}

TEST_CASE("degenerate text embeds to the all-zero vector") {
    auto v = det_embedder().embed("   \t ... !!! ");
    CHECK(v.degenerate());
}

TEST_CASE("batch/single equivalence") {
    auto e = det_embedder();
    auto single = e.embed_batch({"one example"});
    auto batch = e.embed_batch({"one example", "another text"});
    CHECK(single[0] == batch[0]);
}

TEST_CASE("embed_batch rejects an empty list") {
    CHECK_THROWS_AS(det_embedder().embed_batch({}), ContractError);
}

TEST_CASE("config validation") {
    EmbedderConfig small;
    small.dim = 4;
    CHECK_THROWS_AS(Embedder{small}, ContractError);

    EmbedderConfig remote;
    remote.kind = EmbedderKind::remote;
    CHECK_THROWS_AS(Embedder{remote}, ContractError); // endpoint missing
}

TEST_CASE("cosine identities") {
    auto v = det_embedder().embed("some words here");
    CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-6));

    CHECK(cosine(vec({1.f, 0.f}), vec({0.f, 1.f})) == 0.0);

    const float inv_sqrt2 = static_cast<float>(1.0 / std::sqrt(2.0));
    // Closed form: 1/sqrt(2).
    CHECK(cosine(vec({1.f, 0.f}), vec({inv_sqrt2, inv_sqrt2})) ==
          doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("cosine is exactly symmetric") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
        auto a = vec(testsupport::random_unit(rng, 12));
        auto b = vec(testsupport::random_unit(rng, 12));
        CHECK(cosine(a, b) == cosine(b, a));
    }
}

TEST_CASE("cosine errors") {
    CHECK_THROWS_AS(cosine(vec({1.f, 0.f}), vec({1.f, 0.f, 0.f})), ContractError);
    CHECK_THROWS_AS(cosine(vec({0.f, 0.f}), vec({1.f, 0.f})), ContractError);
}

TEST_CASE("normalization is invariant to positive scaling of the raw vector") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> comp(-2.0, 2.0);
    std::uniform_real_distribution<double> scale(0.1, 50.0);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> raw(10);
        for (auto& v : raw) v = comp(rng);
        const double c = scale(rng);
        std::vector<double> scaled = raw;
        for (auto& v : scaled) v *= c;
        auto a = normalize_raw(raw);
        auto b = normalize_raw(scaled);
        REQUIRE(a.dim() == b.dim());
        for (std::size_t k = 0; k < a.dim(); ++k) {
            CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-6));
        }
    }
}

TEST_CASE("remote embedder round-trips the stub payload after normalization") {
    testsupport::StubServer stub;
    stub.post("/embed", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.at("texts").size() == 2);
        res.set_content(
            nlohmann::json{{"vectors", {{3.0, 4.0}, {0.0, 2.0}}}, {"dim", 2}}.dump(),
            "application/json");
    });
    stub.start();

    EmbedderConfig cfg;
    cfg.kind = EmbedderKind::remote;
    cfg.endpoint = stub.endpoint();
    cfg.dim = 2;
    Embedder e(cfg);

    auto out = e.embed_batch({"first", "second"});
    REQUIRE(out.size() == 2);
    CHECK(out[0].values[0] == doctest::Approx(0.6));
    CHECK(out[0].values[1] == doctest::Approx(0.8));
    CHECK(out[1].values[0] == doctest::Approx(0.0));
    CHECK(out[1].values[1] == doctest::Approx(1.0));
}

TEST_CASE("remote embedder reports the retry count on transport failure") {
    EmbedderConfig cfg;
    cfg.kind = EmbedderKind::remote;
    cfg.endpoint = "http://127.0.0.1:1"; // nothing listens here
    cfg.dim = 4;
    cfg.max_attempts = 2;
    Embedder e(cfg);
    try {
        e.embed("text");
        FAIL("expected TransportError");
    } catch (const TransportError& err) {
        CHECK(err.attempts() == 2);
    }
}

TEST_CASE("remote embedder rejects a dimension mismatch") {
    testsupport::StubServer stub;
    stub.post("/embed", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            nlohmann::json{{"vectors", {{1.0, 0.0, 0.0}}}, {"dim", 3}}.dump(),
            "application/json");
    });
    stub.start();

    EmbedderConfig cfg;
    cfg.kind = EmbedderKind::remote;
    cfg.endpoint = stub.endpoint();
    cfg.dim = 2;
    CHECK_THROWS_AS(Embedder(cfg).embed("text"), ContractError);
}
