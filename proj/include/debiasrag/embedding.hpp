#ifndef DEBIASRAG_EMBEDDING_HPP
#define DEBIASRAG_EMBEDDING_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace debiasrag {

// Unit-length embedding stored as float32. An all-zero vector marks a text
// that produced no tokens; it is flagged degenerate and excluded from
// retrieval by callers.
struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
    bool degenerate() const;
};

bool operator==(const EmbeddingVector& a, const EmbeddingVector& b);

enum class EmbedderKind { deterministic_hash, remote };

struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::deterministic_hash;
    std::size_t dim = 64;        // required >= 8 for deterministic; 0 = accept server dim
    std::string endpoint;        // remote only
    std::uint64_t seed = 0;      // deterministic only
    int max_in_flight = 4;       // remote: bound on concurrent requests
    int max_attempts = 3;        // remote: tries per batch

    void validate() const;
};

// Text-to-vector embedder. Stateless after construction; safe to call
// concurrently. The deterministic kind hashes tokens into dim buckets with a
// seeded 64-bit hash, counts, and L2-normalizes; the remote kind speaks the
// POST {endpoint}/embed wire contract.
class Embedder {
public:
    explicit Embedder(EmbedderConfig cfg);

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
    EmbeddingVector embed(const std::string& text) const;

    const EmbedderConfig& config() const { return cfg_; }

private:
    EmbedderConfig cfg_;
    struct Limiter;
    std::shared_ptr<Limiter> limiter_;
};

// Cosine similarity of two non-degenerate vectors of equal dimension.
// Stored vectors are pre-normalized, so this is a clamped dot product.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// L2-normalizes a raw vector into storage form. All-zero input stays
// all-zero (degenerate).
EmbeddingVector normalize_raw(const std::vector<double>& raw);

// Seeded 64-bit token hash used by the deterministic embedder.
std::uint64_t hash64(const std::string& token, std::uint64_t seed);

} // namespace debiasrag

#endif
