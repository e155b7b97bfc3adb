#ifndef DEBIASRAG_HTTP_HPP
#define DEBIASRAG_HTTP_HPP

#include <string>

#include "json.hpp"

namespace debiasrag::http {

// POSTs `body` as application/json to {endpoint}{path} and parses the JSON
// response. Retries connection failures and non-200 statuses up to
// max_attempts, then throws TransportError tagged with `context`.
// `endpoint` is scheme://host[:port][/prefix].
nlohmann::json post_json(const std::string& endpoint, const std::string& path,
                         const nlohmann::json& body, int max_attempts,
                         const std::string& context);

} // namespace debiasrag::http

#endif
