#pragma once

#include "vulbin/memory/queue.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vulbin::reasoner {

struct FunctionRow {
    std::string function_id;
    std::string address;  // "0x401130"
    std::string state;
    std::map<std::string, std::string> verdicts;  // cwe -> yes / no / invalid
    std::vector<std::string> suspected;
    std::string last_error;
};

struct BinaryReport {
    std::string artifact_hash;
    std::string binary_name;
    std::vector<std::string> target_cwes;
    std::map<std::string, std::string> per_cwe;  // yes / no / incomplete
    std::vector<FunctionRow> functions;          // dispatch order
    memory::CoverageReport coverage;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
    std::string model_tag;

    bool flagged(const std::string& cwe) const;
};

struct ReportInfo {
    std::string artifact_hash;
    std::string binary_name;
    std::vector<std::string> target_cwes;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
    std::string model_tag;
};

// Per CWE: yes when any function says yes; otherwise incomplete when a
// function failed or answered invalid; otherwise no.
// Errors: QueueNotTerminal.
BinaryReport aggregate(const memory::AnalysisQueue& queue, const ReportInfo& info);

// Deterministic renderings: no timestamps, stable key order.
std::string report_json(const BinaryReport& report);
std::string report_markdown(const BinaryReport& report);

}  // namespace vulbin::reasoner
