#include "vulbin/llm/client.hpp"

#include "vulbin/common/hash.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/llm/mock_backend.hpp"

#include <json.hpp>

#include <algorithm>
#include <thread>

namespace vulbin::llm {

using nlohmann::json;

std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

std::uint64_t count_tokens(const std::vector<ChatMessage>& messages) {
    std::uint64_t total = 0;
    for (const auto& m : messages) total += count_tokens(m.content);
    return total;
}

std::string request_hash(const std::vector<ChatMessage>& messages) {
    json j = json::array();
    for (const auto& m : messages) j.push_back({std::string(to_string(m.role)), m.content});
    return sha256_hex(j.dump());
}

void LlmConfig::validate() const {
    if (max_context_tokens == 0 || max_reply_tokens == 0) {
        throw Error(ErrorCode::ConfigError, "llm token limits must be positive");
    }
    if (max_reply_tokens >= max_context_tokens) {
        throw Error(ErrorCode::ConfigError, "llm.max_reply_tokens must be below llm.max_context_tokens");
    }
    if (temperature < 0) throw Error(ErrorCode::ConfigError, "llm.temperature must be >= 0");
    if (requests_per_minute == 0) throw Error(ErrorCode::ConfigError, "llm.requests_per_minute must be positive");
    if (backend == BackendType::http_api && endpoint_url.empty()) {
        throw Error(ErrorCode::ConfigError, "http_api backend needs llm.endpoint_url");
    }
    if (backend == BackendType::replay && replay_path.empty()) {
        throw Error(ErrorCode::ConfigError, "replay backend needs llm.replay_path");
    }
}

// ---- rate limiter -------------------------------------------------------------

RateLimiter::RateLimiter(unsigned per_minute, Clock clock, Sleep sleep)
    : per_minute_(per_minute), clock_(std::move(clock)), sleep_(std::move(sleep)) {
    if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
    if (!sleep_) sleep_ = [](std::chrono::steady_clock::duration d) { std::this_thread::sleep_for(d); };
}

void RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    constexpr auto kWindow = std::chrono::seconds(60);
    for (;;) {
        auto now = clock_();
        while (!issued_.empty() && now - issued_.front() >= kWindow) issued_.pop_front();
        if (issued_.size() < per_minute_) {
            issued_.push_back(now);
            return;
        }
        // Holding the lock while waiting keeps acquisitions strictly ordered.
        sleep_(issued_.front() + kWindow - now);
    }
}

// ---- client ---------------------------------------------------------------------

LlmClient::LlmClient(LlmConfig cfg, std::unique_ptr<ChatBackend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)) {
    cfg_.validate();
    if (backend_->uses_network()) limiter_ = std::make_unique<RateLimiter>(cfg_.requests_per_minute);
    sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (!cfg_.record_path.empty()) {
        if (cfg_.record_path.has_parent_path()) std::filesystem::create_directories(cfg_.record_path.parent_path());
        record_.open(cfg_.record_path, std::ios::app);
        if (!record_) throw Error(ErrorCode::ConfigError, "cannot open record file " + cfg_.record_path.string());
    }
}

LlmClient::~LlmClient() = default;

std::unique_ptr<LlmClient> LlmClient::from_config(const LlmConfig& cfg) {
    cfg.validate();
    std::unique_ptr<ChatBackend> backend;
    switch (cfg.backend) {
    case BackendType::mock: backend = std::make_unique<MockBackend>(); break;
    case BackendType::replay: backend = std::make_unique<ReplayBackend>(cfg.replay_path); break;
    case BackendType::http_api: backend = std::make_unique<HttpBackend>(); break;
    }
    return std::make_unique<LlmClient>(cfg, std::move(backend));
}

std::uint64_t LlmClient::requests_sent() const {
    std::lock_guard lock(mu_);
    return sent_;
}

std::string LlmClient::complete(const std::vector<ChatMessage>& messages) {
    auto tokens = count_tokens(messages);
    if (tokens + cfg_.max_reply_tokens > cfg_.max_context_tokens) {
        throw Error(ErrorCode::BudgetOverflow, "prompt of " + std::to_string(tokens) + " tokens + reply reserve " +
                                                   std::to_string(cfg_.max_reply_tokens) + " exceeds context " +
                                                   std::to_string(cfg_.max_context_tokens));
    }
    for (unsigned attempt = 0;; ++attempt) {
        try {
            if (limiter_) limiter_->acquire();
            {
                std::lock_guard lock(mu_);
                ++sent_;
            }
            std::string reply = backend_->send(messages, cfg_);
            if (record_.is_open()) {
                json line = {{"request_hash", request_hash(messages)}, {"reply", reply}};
                std::lock_guard lock(mu_);
                record_ << line.dump() << '\n';
                record_.flush();
            }
            return reply;
        } catch (const TransportError& e) {
            if (!e.transient() || attempt >= cfg_.max_retries) {
                throw TransportError(e.message() + " (after " + std::to_string(attempt + 1) + (attempt == 0 ? " attempt)" : " attempts)"),
                                     false);
            }
            auto delay = std::min<std::uint64_t>(30000, std::uint64_t{cfg_.retry_base_delay_ms} << attempt);
            sleep_(std::chrono::milliseconds(delay));
        }
    }
}

// ---- replay -------------------------------------------------------------------

ReplayBackend::ReplayBackend(const std::filesystem::path& recording) {
    auto content = text::read_file(recording);
    std::size_t line_no = 0;
    for (auto line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            replies_[j.at("request_hash").get<std::string>()] = j.at("reply").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError,
                        recording.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::string ReplayBackend::send(const std::vector<ChatMessage>& messages, const LlmConfig&) {
    auto it = replies_.find(request_hash(messages));
    if (it == replies_.end()) throw Error(ErrorCode::ReplayMiss, "no recorded reply for request " + request_hash(messages));
    return it->second;
}

}  // namespace vulbin::llm
