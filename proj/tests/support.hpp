#ifndef DEBIASRAG_TESTS_SUPPORT_HPP
#define DEBIASRAG_TESTS_SUPPORT_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "debiasrag/corpus.hpp"
#include "debiasrag/retrieval.hpp"

namespace testsupport {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("debiasrag_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

// Loopback HTTP stub bound to an ephemeral port.
class StubServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    StubServer& post(const std::string& path, Handler handler) {
        server_.Post(path, std::move(handler));
        return *this;
    }

    void start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

// Builds a document with a handcrafted (already unit-length) embedding.
inline debiasrag::Document make_doc(std::string id, std::vector<float> vec,
                                    debiasrag::DocKind kind = debiasrag::DocKind::normal,
                                    std::string text = "") {
    debiasrag::Document doc;
    doc.id = std::move(id);
    doc.text = text.empty() ? doc.id + " text" : std::move(text);
    doc.kind = kind;
    doc.embedding.values = std::move(vec);
    return doc;
}

inline debiasrag::Repository make_repo(std::vector<debiasrag::Document> docs,
                                       debiasrag::RepoName name = debiasrag::RepoName::D) {
    debiasrag::Repository repo;
    repo.name = name;
    repo.documents = std::move(docs);
    std::sort(repo.documents.begin(), repo.documents.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    if (!repo.documents.empty()) repo.dim = repo.documents.front().embedding.dim();
    return repo;
}

// Random unit vector.
inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
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

// Synthetic normalized pool for exercising the rerank numerics directly.
inline debiasrag::CandidatePool random_normalized_pool(std::mt19937_64& rng, std::size_t size) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    debiasrag::CandidatePool pool;
    pool.query.text = "synthetic";
    for (std::size_t i = 0; i < size; ++i) {
        debiasrag::Candidate c;
        c.doc.id = "c" + std::to_string(i);
        c.doc.kind = debiasrag::DocKind::normal;
        c.s_q = unit(rng);
        c.s_a = unit(rng);
        c.s_q_norm = unit(rng);
        c.s_a_norm = unit(rng);
        pool.members.push_back(std::move(c));
    }
    return pool;
}

// Random point on the 2-simplex.
inline std::array<double, 2> random_theta(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double t = unit(rng);
    return {t, 1.0 - t};
}

} // namespace testsupport

#endif
