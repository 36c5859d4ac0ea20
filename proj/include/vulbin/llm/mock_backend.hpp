#pragma once

#include "vulbin/llm/client.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vulbin::llm {

// Deterministic rule-table backend: a pure function of the message contents.
// The rules are documented in docs/mock_rules.md; bump kVersion when they change.
class MockBackend : public ChatBackend {
public:
    std::string send(const std::vector<ChatMessage>& messages, const LlmConfig& cfg) override;
};

namespace mock_rules {

inline constexpr std::string_view kVersion = "mock-rules-v1";
// Any request whose messages contain this identifier fails permanently.
inline constexpr std::string_view kFailMarker = "VULBIN_MOCK_FAIL";

struct Finding {
    std::string cwe_id;
    int line = 0;  // 1-based line within the analysed code
    std::string call;
    std::string root_cause;
    std::string impact;
};

// Weakness patterns for CWE-78/121/134/190/416/476/606/787, ordered by line.
std::vector<Finding> find_weaknesses(std::string_view code);

// Lines with computed-offset pointer dereferences or run-time array indexes.
std::vector<int> pointer_arithmetic_lines(std::string_view code);

// Ghidra/RetDec style placeholder names: param_1, local_10, uVar1, auStack_28, FUN_00401130 ...
bool is_generic_name(std::string_view name);

// (old, new) proposals in order of first appearance; new names are unique
// and never collide with identifiers already in the code.
std::vector<std::pair<std::string, std::string>> propose_renames(std::string_view code);

// Struct definitions for pointers accessed at two or more constant offsets.
std::vector<std::string> propose_structs(std::string_view code);

// Distinct callee names in order of first call, excluding the function itself.
std::vector<std::string> called_functions(std::string_view code);

std::string cwe_short_name(std::string_view cwe_id);

}  // namespace mock_rules

}  // namespace vulbin::llm
