#include "vulbin/app/config.hpp"

#include "vulbin/common/hash.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/reasoner/knowledge.hpp"

#include <json.hpp>

#include <set>

namespace vulbin::app {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

void only_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) bad(std::string(section) + ": must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == key;
        if (!ok) bad(std::string(section) + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& j, std::string_view section, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        bad(std::string(section) + "." + key + ": wrong type");
    }
}

void read_path(const json& j, std::string_view section, const char* key, std::filesystem::path& out,
               const std::filesystem::path& base) {
    std::string s;
    if (!j.contains(key)) {
        if (!out.empty() && out.is_relative()) out = base / out;
        return;
    }
    read(j, section, key, s);
    if (s.empty()) {
        out.clear();
        return;
    }
    std::filesystem::path p(s);
    out = p.is_absolute() ? p : base / p;
}

template <class T>
void read_positive(const json& j, std::string_view section, const char* key, T& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) bad(std::string(section) + "." + key + ": must be a positive integer");
    out = v.get<T>();
}

template <class T>
void read_unsigned(const json& j, std::string_view section, const char* key, T& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad(std::string(section) + "." + key + ": must be a non-negative integer");
    out = v.get<T>();
}

}  // namespace

std::filesystem::path RunConfig::store_path() const {
    return memory.store_path.empty() ? output_dir / "store.db" : memory.store_path;
}

void RunConfig::validate() const {
    try {
        decompiler.validate();
        llm.validate();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError) throw;
        bad(e.what());
    }
    if (reasoner.target_cwes.empty()) bad("reasoner.target_cwes must not be empty");
    for (const auto& c : reasoner.target_cwes) {
        if (!reasoner::valid_cwe_id(c)) bad("reasoner.target_cwes: '" + c + "' is not a CWE id");
    }
    if (workers == 0) bad("workers must be positive");
    if (memory.summary_token_cap == 0) bad("memory.summary_token_cap must be positive");
    if (output_dir.empty()) bad("output_dir must not be empty");
}

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        bad(std::string("invalid JSON: ") + e.what());
    }
    only_keys(j, "config", {"decompiler", "llm", "memory", "reasoner", "output_dir", "seed", "workers"});
    RunConfig cfg;
    cfg.reasoner.kb_dir = base_dir / cfg.reasoner.kb_dir;
    cfg.output_dir = base_dir / cfg.output_dir;

    if (j.contains("decompiler")) {
        const auto& d = j["decompiler"];
        only_keys(d, "decompiler", {"kind", "command_template", "fixture_dir", "timeout_seconds"});
        std::string kind = "fixture";
        read(d, "decompiler", "kind", kind);
        if (kind == "fixture") cfg.decompiler.kind = decomp::BackendKind::fixture;
        else if (kind == "external_tool") cfg.decompiler.kind = decomp::BackendKind::external_tool;
        else bad("decompiler.kind must be fixture or external_tool");
        read(d, "decompiler", "command_template", cfg.decompiler.command_template);
        read_path(d, "decompiler", "fixture_dir", cfg.decompiler.fixture_dir, base_dir);
        read_positive(d, "decompiler", "timeout_seconds", cfg.decompiler.timeout_seconds);
    }
    if (j.contains("llm")) {
        const auto& l = j["llm"];
        only_keys(l, "llm", {"backend", "endpoint_url", "model_tag", "max_context_tokens", "max_reply_tokens",
                             "temperature", "max_retries", "requests_per_minute", "api_key_env", "replay_path",
                             "record_path", "retry_base_delay_ms"});
        std::string backend = "mock";
        read(l, "llm", "backend", backend);
        if (backend == "mock") cfg.llm.backend = llm::BackendType::mock;
        else if (backend == "replay") cfg.llm.backend = llm::BackendType::replay;
        else if (backend == "http_api") cfg.llm.backend = llm::BackendType::http_api;
        else bad("llm.backend must be mock, replay or http_api");
        read(l, "llm", "endpoint_url", cfg.llm.endpoint_url);
        read(l, "llm", "model_tag", cfg.llm.model_tag);
        read_positive(l, "llm", "max_context_tokens", cfg.llm.max_context_tokens);
        read_positive(l, "llm", "max_reply_tokens", cfg.llm.max_reply_tokens);
        read(l, "llm", "temperature", cfg.llm.temperature);
        read_unsigned(l, "llm", "max_retries", cfg.llm.max_retries);
        read_positive(l, "llm", "requests_per_minute", cfg.llm.requests_per_minute);
        read(l, "llm", "api_key_env", cfg.llm.api_key_env);
        read_path(l, "llm", "replay_path", cfg.llm.replay_path, base_dir);
        read_path(l, "llm", "record_path", cfg.llm.record_path, base_dir);
        read_unsigned(l, "llm", "retry_base_delay_ms", cfg.llm.retry_base_delay_ms);
    }
    if (j.contains("memory")) {
        const auto& m = j["memory"];
        only_keys(m, "memory", {"store_path", "summary_token_cap", "max_retries", "strict_order"});
        read_path(m, "memory", "store_path", cfg.memory.store_path, base_dir);
        read_positive(m, "memory", "summary_token_cap", cfg.memory.summary_token_cap);
        read_unsigned(m, "memory", "max_retries", cfg.memory.max_retries);
        read(m, "memory", "strict_order", cfg.memory.strict_order);
    }
    if (j.contains("reasoner")) {
        const auto& r = j["reasoner"];
        only_keys(r, "reasoner", {"target_cwes", "k_distractors", "kb_dir", "icl_shots"});
        read(r, "reasoner", "target_cwes", cfg.reasoner.target_cwes);
        read_unsigned(r, "reasoner", "k_distractors", cfg.reasoner.k_distractors);
        read_path(r, "reasoner", "kb_dir", cfg.reasoner.kb_dir, base_dir);
        read(r, "reasoner", "icl_shots", cfg.reasoner.icl_shots);
    }
    read_path(j, "config", "output_dir", cfg.output_dir, base_dir);
    read_unsigned(j, "config", "seed", cfg.seed);
    read_positive(j, "config", "workers", cfg.workers);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::string content;
    try {
        content = text::read_file(path);
    } catch (const Error& e) {
        bad(std::string("cannot read config: ") + e.what());
    }
    auto base = std::filesystem::absolute(path).parent_path();
    return parse_config(content, base);
}

std::string config_fingerprint(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["decompiler"] = {{"kind", cfg.decompiler.kind == decomp::BackendKind::fixture ? "fixture" : "external_tool"},
                       {"command_template", cfg.decompiler.command_template},
                       {"timeout_seconds", cfg.decompiler.timeout_seconds}};
    const char* backend = cfg.llm.backend == llm::BackendType::mock     ? "mock"
                          : cfg.llm.backend == llm::BackendType::replay ? "replay"
                                                                        : "http_api";
    j["llm"] = {{"backend", backend},
                {"endpoint_url", cfg.llm.endpoint_url},
                {"model_tag", cfg.llm.model_tag},
                {"max_context_tokens", cfg.llm.max_context_tokens},
                {"max_reply_tokens", cfg.llm.max_reply_tokens},
                {"temperature", cfg.llm.temperature},
                {"max_retries", cfg.llm.max_retries}};
    j["memory"] = {{"summary_token_cap", cfg.memory.summary_token_cap},
                   {"max_retries", cfg.memory.max_retries},
                   {"strict_order", cfg.memory.strict_order}};
    j["reasoner"] = {{"target_cwes", cfg.reasoner.target_cwes},
                     {"k_distractors", cfg.reasoner.k_distractors},
                     {"icl_shots", cfg.reasoner.icl_shots}};
    j["seed"] = cfg.seed;
    return sha256_hex(j.dump()).substr(0, 16);
}

}  // namespace vulbin::app
