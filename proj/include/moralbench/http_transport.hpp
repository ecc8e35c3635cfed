#pragma once

#include <memory>
#include <string>

#include <httplib.h>

#include "moralbench/gateway.hpp"

namespace moralbench {

/// Chat-completions over HTTP(S). `base_url` is the API root, e.g.
/// "http://localhost:8000/v1"; requests go to `<base_url>/chat/completions`.
class HttpTransport : public Transport {
 public:
  HttpReply post(const ModelEndpoint& endpoint, const std::string& body) override {
    auto [origin, prefix] = split_url(endpoint.base_url);
    httplib::Client client(origin);
    const auto timeout = static_cast<time_t>(endpoint.timeout_seconds);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(timeout, 0);
    client.set_write_timeout(timeout, 0);
    httplib::Headers headers;
    if (auto token = endpoint.resolve_token()) headers.emplace("Authorization", "Bearer " + *token);
    auto res = client.Post(prefix + "/chat/completions", headers, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }

  static std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
  }
};

}  // namespace moralbench
