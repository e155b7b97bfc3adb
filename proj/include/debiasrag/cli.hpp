#ifndef DEBIASRAG_CLI_HPP
#define DEBIASRAG_CLI_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace debiasrag {

// Flat run configuration: TOML file (key = value), flags override file
// values. Unknown keys are rejected.
struct RunConfig {
    // embedder
    std::string embedder_kind = "deterministic-hash"; // or "remote"
    std::size_t embedder_dim = 64;
    std::string embedder_endpoint;
    std::uint64_t embedder_seed = 0;
    // fluency / sentence scorer
    std::string scorer_kind = "char-ngram"; // or "remote"
    int scorer_order = 3;
    std::string scorer_endpoint;
    // generation
    std::string generation_kind = "null"; // or "remote"
    std::string generation_endpoint;
    int generation_max_tokens = 256;
    // retrieval + rerank
    int k_avoid = 5;
    int k_normal = 5;
    int k_final = 4;
    double tau_avoid = 0.9;
    double eta0 = 0.1;
    double epsilon = 1e-9;
    std::array<double, 2> theta{0.5, 0.5};
    int max_backtracks = 20;
    bool route_by_tag = false;
    // evaluation + optimization
    double alpha = 1.0;
    int lambda = 3;
    std::uint64_t seed = 7;
    // paths
    std::string avoid_cache;
    std::string normal_cache;
    std::string attribute_lexicon;
    std::string tag_lexicon;

    static RunConfig from_toml_string(const std::string& text);
    static RunConfig from_toml_file(const std::filesystem::path& path);
    std::string to_toml_string() const;

    void validate() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

namespace cli {

// Runs one subcommand. `args` excludes the program name. Exit codes:
// 0 success, 1 usage error, 2 runtime error.
int dispatch(const std::vector<std::string>& args);

} // namespace cli

} // namespace debiasrag

#endif
