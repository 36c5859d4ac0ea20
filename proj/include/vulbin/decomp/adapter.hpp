#pragma once

#include "vulbin/ingest/binary.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vulbin::decomp {

enum class FunctionStatus { ok, skipped };

struct RawFunction {
    std::string function_id;     // "<content_hash>:0x401130"
    std::string synthetic_name;  // "FUN_00401130"
    std::uint64_t entry_address = 0;
    std::string pseudo_code;
    std::vector<std::uint64_t> callee_addresses;  // direct call targets, sorted, unique
    std::uint64_t token_estimate = 0;
    FunctionStatus status = FunctionStatus::ok;
    std::optional<std::uint64_t> size_bytes;
    unsigned unresolved_indirect_calls = 0;
};

class CallGraph {
public:
    void add_node(const std::string& id);
    // Both endpoints must already be nodes. Duplicate edges collapse.
    void add_edge(const std::string& caller, const std::string& callee);

    const std::set<std::string>& nodes() const { return nodes_; }
    const std::set<std::pair<std::string, std::string>>& edges() const { return edges_; }
    std::vector<std::string> callees(const std::string& id) const;
    bool contains(const std::string& id) const { return nodes_.contains(id); }

private:
    std::set<std::string> nodes_;
    std::set<std::pair<std::string, std::string>> edges_;
    std::map<std::string, std::set<std::string>> out_;
};

enum class BackendKind { external_tool, fixture };

struct DecompilerBackendConfig {
    BackendKind kind = BackendKind::fixture;
    std::string command_template;       // external_tool: uses {input_path} and {output_dir}
    std::filesystem::path fixture_dir;  // fixture
    unsigned timeout_seconds = 300;

    // Throws Error{ConfigError} unless exactly the fields of `kind` are set.
    void validate() const;
};

struct Decompilation {
    std::vector<RawFunction> functions;  // ascending entry address
    CallGraph graph;
};

inline constexpr std::uint64_t kMinFunctionBytes = 8;
inline constexpr std::string_view kDecompilerEnvVar = "VULBIN_DECOMPILER";

std::string make_function_id(std::string_view content_hash, std::uint64_t address);
// Parses the address suffix of a function id; throws Error{ParseError}.
std::uint64_t address_of(std::string_view function_id);
std::string synthetic_name(std::uint64_t address);

// Runs the configured backend. `work_dir` receives external tool output;
// when empty a temporary directory is used and removed afterwards.
// Errors: UnsupportedFormat, BackendLaunchFailure, BackendTimeout, EmptyOutput.
Decompilation decompile(const ingest::BinaryArtifact& artifact, const DecompilerBackendConfig& cfg,
                        const std::filesystem::path& work_dir = {});

// Reads a directory laid out per the backend contract:
//   <hex_address>.c   one pseudo-code file per function
//   edges.json        [["0x401130","0x401260"], ...] direct call edges
//   functions.json    optional [{"address","name","size","indirect_calls"}]
Decompilation read_backend_output(const std::filesystem::path& dir, std::string_view content_hash);

// Fixture lookup order: <fixture_dir>/<content_hash>, <fixture_dir>/<binary stem>, <fixture_dir>.
std::filesystem::path resolve_fixture_dir(const std::filesystem::path& fixture_dir,
                                          const ingest::BinaryArtifact& artifact);

// LF line endings, tabs expanded to 4-column stops, leading backend banner
// (blank lines and comment-only lines before the first code line) removed.
// Idempotent.
std::string normalize_pseudo_code(std::string_view text);

}  // namespace vulbin::decomp
