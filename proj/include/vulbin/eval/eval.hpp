#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::eval {

enum class Label { bad, good };

struct GroundTruthEntry {
    std::string case_id;
    std::filesystem::path binary_path;  // resolved against the manifest directory
    std::string cwe_id;
    Label label = Label::good;
};

struct ConfusionCounts {
    std::uint64_t tp = 0, fn = 0, tn = 0, fp = 0;
    std::uint64_t missing = 0;  // cases without a verdict; not part of the matrix
    std::uint64_t total() const { return tp + fn + tn + fp; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsRow {
    std::string cwe_id;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;  // fractions in [0, 1]
};

// CSV with header case_id,binary_path,cwe_id,label.
// Errors: ParseError (with line number; also no rows or an unreadable file), DuplicateCase.
std::vector<GroundTruthEntry> load_manifest(const std::filesystem::path& path);
std::vector<GroundTruthEntry> parse_manifest(std::string_view csv, const std::filesystem::path& base_dir = {});

using CaseVerdicts = std::map<std::string, std::map<std::string, bool>>;  // case_id -> cwe -> flagged

std::map<std::string, ConfusionCounts> score(const CaseVerdicts& verdicts, const std::vector<GroundTruthEntry>& truth);

// Errors: EmptyCounts.
MetricsRow metrics(const ConfusionCounts& counts, std::string cwe_id = {});

// Percentage rounded half-up to two decimals: 0.964583 -> 96.46.
double percent(double fraction);

struct Similarity {
    double cosine = 0;
    double levenshtein_norm = 0;
};

// Mnemonic and operand tokens; directives, labels, comments and objdump
// address/byte columns are dropped.
std::vector<std::string> assembly_tokens(std::string_view assembly);

// Errors: EmptyInput.
Similarity assembly_similarity(std::string_view a, std::string_view b);

struct ToolMetrics {
    std::string tool;
    std::map<std::string, ConfusionCounts> counts;
};

// Baseline JSON as written by report_json (or {"tool":..,"cwes":{id:{tp,fn,tn,fp}}}).
// Errors: ParseError.
ToolMetrics load_baseline(const std::filesystem::path& path);

std::string report_json(const ToolMetrics& metrics, const std::optional<ToolMetrics>& baseline = std::nullopt);
std::string report_markdown(const ToolMetrics& metrics, const std::optional<ToolMetrics>& baseline = std::nullopt);

// Writes report.json and report.md into `dir`.
void write_report(const std::filesystem::path& dir, const ToolMetrics& metrics,
                  const std::optional<ToolMetrics>& baseline = std::nullopt);

}  // namespace vulbin::eval
