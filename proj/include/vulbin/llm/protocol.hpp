#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Wire conventions shared by the prompt builders and the mock backend.
namespace vulbin::llm::protocol {

// First line of every system message: "TASK: <name>".
inline constexpr std::string_view kTaskPrefix = "TASK: ";
inline constexpr std::string_view kTaskPlan = "optimization-decision";
inline constexpr std::string_view kTaskRename = "rename-variables";
inline constexpr std::string_view kTaskStructs = "recover-structs";
inline constexpr std::string_view kTaskAnnotate = "annotate-vulnerabilities";
inline constexpr std::string_view kTaskClassify = "cwe-classification";
inline constexpr std::string_view kTaskSummary = "function-summary";
inline constexpr std::string_view kTaskChunkSummary = "chunk-summary";

// Classification question line listing every CWE the reply must answer.
inline constexpr std::string_view kCweListPrefix = "CWE list: ";
// Summary request line carrying the verdicts, e.g. "Verdicts: CWE-78=yes, CWE-134=no".
inline constexpr std::string_view kVerdictsPrefix = "Verdicts: ";
// Function identity line in summary prompts.
inline constexpr std::string_view kFunctionPrefix = "Function: ";
// Chunk-summary request line carrying the summary of the preceding chunks.
inline constexpr std::string_view kPreviousSummaryPrefix = "Previous summary: ";

inline constexpr std::string_view kRepairPrompt =
    "Your previous reply could not be parsed. Respond only with the fenced block in the required format.";

std::string task_line(std::string_view task);

// Task name from the first system message, if any.
std::optional<std::string> task_of(std::string_view system_message);

// Body of the last ``` fenced block (language tag dropped), if any.
std::optional<std::string> last_fenced_block(std::string_view text);

// All fenced block bodies in order.
std::vector<std::string> fenced_blocks(std::string_view text);

std::string fence(std::string_view body, std::string_view lang = "");

}  // namespace vulbin::llm::protocol
