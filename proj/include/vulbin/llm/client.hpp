#pragma once

#include "vulbin/common/error.hpp"
#include "vulbin/llm/tokens.hpp"

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace vulbin::llm {

enum class Role { system, user, assistant };
std::string_view to_string(Role role);

struct ChatMessage {
    Role role;
    std::string content;
};

std::uint64_t count_tokens(const std::vector<ChatMessage>& messages);

// SHA-256 over the canonical JSON of (role, content) pairs.
std::string request_hash(const std::vector<ChatMessage>& messages);

enum class BackendType { http_api, mock, replay };

struct LlmConfig {
    BackendType backend = BackendType::mock;
    std::string endpoint_url;  // http_api only
    std::string model_tag = "mock-rules-v1";
    std::uint64_t max_context_tokens = 16384;
    std::uint64_t max_reply_tokens = 1024;
    double temperature = 0.0;
    unsigned max_retries = 3;
    unsigned requests_per_minute = 60;
    std::string api_key_env = "VULBIN_API_KEY";  // name of the variable, never its value
    std::filesystem::path replay_path;            // replay: JSON-lines recording to serve
    std::filesystem::path record_path;            // any backend: append {request_hash, reply}
    unsigned retry_base_delay_ms = 500;

    void validate() const;  // throws Error{ConfigError}
};

// Failure raised by a backend. Transient failures are retried with backoff.
class TransportError : public Error {
public:
    TransportError(const std::string& message, bool transient)
        : Error(ErrorCode::TransportFailure, message), transient_(transient) {}
    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string send(const std::vector<ChatMessage>& messages, const LlmConfig& cfg) = 0;
    virtual bool uses_network() const { return false; }
};

// Sliding 60 s window: at most `per_minute` acquisitions in any window.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleep = std::function<void(std::chrono::steady_clock::duration)>;

    explicit RateLimiter(unsigned per_minute, Clock clock = {}, Sleep sleep = {});
    void acquire();

private:
    unsigned per_minute_;
    Clock clock_;
    Sleep sleep_;
    std::mutex mu_;
    std::deque<std::chrono::steady_clock::time_point> issued_;
};

// Provider-agnostic completion client. Thread-safe; the rate limiter is the
// only point where concurrent callers serialize.
class LlmClient {
public:
    LlmClient(LlmConfig cfg, std::unique_ptr<ChatBackend> backend);
    ~LlmClient();

    // Builds the backend named by cfg.backend (mock, replay or http_api).
    static std::unique_ptr<LlmClient> from_config(const LlmConfig& cfg);

    // Errors: BudgetOverflow (before any backend call), TransportFailure
    // (retries exhausted), ReplayMiss.
    std::string complete(const std::vector<ChatMessage>& messages);

    const LlmConfig& config() const { return cfg_; }
    std::uint64_t prompt_budget() const { return cfg_.max_context_tokens - cfg_.max_reply_tokens; }
    std::uint64_t requests_sent() const;

    // Test hook: replaces the real sleep used between retries.
    void set_sleep(std::function<void(std::chrono::milliseconds)> sleep) { sleep_ = std::move(sleep); }

private:
    LlmConfig cfg_;
    std::unique_ptr<ChatBackend> backend_;
    std::unique_ptr<RateLimiter> limiter_;
    std::function<void(std::chrono::milliseconds)> sleep_;
    mutable std::mutex mu_;
    std::uint64_t sent_ = 0;
    std::ofstream record_;
};

using LlmHandle = LlmClient&;

// Replays a JSON-lines recording; never touches the network.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& recording);
    std::string send(const std::vector<ChatMessage>& messages, const LlmConfig& cfg) override;
    std::size_t size() const { return replies_.size(); }

private:
    std::unordered_map<std::string, std::string> replies_;
};

// OpenAI-style chat-completion endpoint. The credential is read from the
// environment variable named by cfg.api_key_env at request time.
class HttpBackend : public ChatBackend {
public:
    std::string send(const std::vector<ChatMessage>& messages, const LlmConfig& cfg) override;
    bool uses_network() const override { return true; }
};

}  // namespace vulbin::llm
