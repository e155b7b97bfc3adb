#include "debiasrag/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <semaphore>

#include "debiasrag/errors.hpp"
#include "debiasrag/http.hpp"
#include "debiasrag/text.hpp"

namespace debiasrag {

namespace {

constexpr double kNormTolerance = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

bool EmbeddingVector::degenerate() const {
    return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f; });
}

bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) {
    return a.values == b.values;
}

void EmbedderConfig::validate() const {
    switch (kind) {
    case EmbedderKind::deterministic_hash:
        if (dim < 8) {
            throw ContractError("deterministic embedder requires dim >= 8, got " +
                                std::to_string(dim));
        }
        break;
    case EmbedderKind::remote:
        if (endpoint.empty()) {
            throw ContractError("remote embedder requires an endpoint");
        }
        break;
    }
    if (max_in_flight < 1) {
        throw ContractError("max_in_flight must be >= 1");
    }
}

std::uint64_t hash64(const std::string& token, std::uint64_t seed) {
    // FNV-1a over the token bytes, then avalanched together with the seed.
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return splitmix64(h ^ splitmix64(seed));
}

EmbeddingVector normalize_raw(const std::vector<double>& raw) {
    double sq = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw ContractError("embedding component is not finite");
        sq += v * v;
    }
    EmbeddingVector out;
    out.values.resize(raw.size(), 0.0f);
    if (sq == 0.0) return out; // degenerate
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.values[i] = static_cast<float>(raw[i] * inv);
    }
    return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw ContractError("cosine: dimension mismatch (" + std::to_string(a.dim()) +
                            " vs " + std::to_string(b.dim()) + ")");
    }
    if (a.degenerate() || b.degenerate()) {
        throw ContractError("cosine: degenerate (all-zero) embedding has no defined value");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
    }
    return std::clamp(dot, -1.0, 1.0);
}

struct Embedder::Limiter {
    explicit Limiter(int n) : sem(n) {}
    std::counting_semaphore<> sem;
};

Embedder::Embedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.kind == EmbedderKind::remote) {
        limiter_ = std::make_shared<Limiter>(cfg_.max_in_flight);
    }
}

EmbeddingVector Embedder::embed(const std::string& text) const {
    return embed_batch({text}).front();
}

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) const {
    if (texts.empty()) {
        throw ContractError("embed_batch: empty text list");
    }

    if (cfg_.kind == EmbedderKind::deterministic_hash) {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            std::vector<double> buckets(cfg_.dim, 0.0);
            for (const auto& tok : tokenize(text)) {
                buckets[hash64(tok, cfg_.seed) % cfg_.dim] += 1.0;
            }
            out.push_back(normalize_raw(buckets));
        }
        return out;
    }

    // Remote: one request per batch, bounded in-flight.
    limiter_->sem.acquire();
    struct Release {
        Limiter* l;
        ~Release() { l->sem.release(); }
    } release{limiter_.get()};

    nlohmann::json body{{"texts", texts}};
    nlohmann::json res =
        http::post_json(cfg_.endpoint, "/embed", body, cfg_.max_attempts, "embed");

    if (!res.contains("vectors") || !res["vectors"].is_array() || !res.contains("dim")) {
        throw ContractError("embed: response missing \"vectors\" or \"dim\"");
    }
    const auto dim = res["dim"].get<std::size_t>();
    if (cfg_.dim != 0 && dim != cfg_.dim) {
        throw ContractError("embed: service dim " + std::to_string(dim) +
                            " does not match configured dim " + std::to_string(cfg_.dim));
    }
    const auto& vectors = res["vectors"];
    if (vectors.size() != texts.size()) {
        throw ContractError("embed: expected " + std::to_string(texts.size()) +
                            " vectors, got " + std::to_string(vectors.size()));
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& vec : vectors) {
        if (!vec.is_array() || vec.size() != dim) {
            throw ContractError("embed: vector length does not match response dim " +
                                std::to_string(dim));
        }
        out.push_back(normalize_raw(vec.get<std::vector<double>>()));
    }
    return out;
}

} // namespace debiasrag
