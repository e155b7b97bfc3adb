#include "debiasrag/http.hpp"

#include <utility>

#include "httplib.h"

#include "debiasrag/errors.hpp"

namespace debiasrag::http {

namespace {

// Splits "http://host:port/prefix" into base URL and path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto slash = endpoint.find('/', host_start);
    if (slash == std::string::npos) return {endpoint, ""};
    return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

} // namespace

nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                         const nlohmann::json& body, int max_attempts,
                         const std::string& context) {
    if (endpoint.empty()) {
        throw ContractError(context + ": remote endpoint not configured");
    }
    if (max_attempts < 1) max_attempts = 1;

    auto [base, prefix] = split_endpoint(endpoint);
    const std::string payload = body.dump();
    std::string last_error;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        httplib::Client client(base);
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(30, 0);

        auto res = client.Post(prefix + path, payload, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("invalid JSON response: ") + e.what();
        }
    }
    throw TransportError(context + ": POST " + endpoint + path + " failed: " + last_error,
                         max_attempts);
}

} // namespace debiasrag::http
