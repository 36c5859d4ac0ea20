#pragma once

#include "vulbin/decomp/adapter.hpp"
#include "vulbin/llm/client.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::app {

struct MemoryConfig {
    std::filesystem::path store_path;  // empty: <output_dir>/store.db
    std::uint64_t summary_token_cap = 256;
    unsigned max_retries = 2;
    bool strict_order = true;
};

struct ReasonerConfig {
    std::vector<std::string> target_cwes = {"CWE-78", "CWE-134", "CWE-190", "CWE-606"};
    unsigned k_distractors = 2;
    std::filesystem::path kb_dir = "kb";
    bool icl_shots = true;
};

struct RunConfig {
    decomp::DecompilerBackendConfig decompiler;
    llm::LlmConfig llm;
    MemoryConfig memory;
    ReasonerConfig reasoner;
    std::filesystem::path output_dir = "vulbin-out";
    std::uint64_t seed = 0;
    unsigned workers = 4;

    std::filesystem::path store_path() const;
    // Errors: ConfigError.
    void validate() const;
};

// Parses JSON; unknown keys are rejected. Relative paths resolve against
// `base_dir`. Errors: ConfigError.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);

// Errors: ConfigError (including an unreadable file).
RunConfig load_config(const std::filesystem::path& path);

// Hash of every setting that can change results. Paths, worker count and
// credential settings are left out.
std::string config_fingerprint(const RunConfig& cfg);

}  // namespace vulbin::app
