#include "vulbin/llm/client.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <regex>

namespace vulbin::llm {

using nlohmann::json;

namespace {

struct Endpoint {
    std::string base;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw Error(ErrorCode::ConfigError, "malformed endpoint url: " + url);
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

std::string HttpBackend::send(const std::vector<ChatMessage>& messages, const LlmConfig& cfg) {
    auto [base, path] = split_url(cfg.endpoint_url);
    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(180);

    json body = {{"model", cfg.model_tag},
                 {"temperature", cfg.temperature},
                 {"max_tokens", cfg.max_reply_tokens},
                 {"messages", json::array()}};
    for (const auto& m : messages) body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});

    httplib::Headers headers;
    if (!cfg.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("http request failed: " + httplib::to_string(res.error()), true);
    if (res->status == 429 || res->status >= 500) {
        throw TransportError("http status " + std::to_string(res->status), true);
    }
    if (res->status != 200) throw TransportError("http status " + std::to_string(res->status), false);
    try {
        auto j = json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what(), false);
    }
}

}  // namespace vulbin::llm
