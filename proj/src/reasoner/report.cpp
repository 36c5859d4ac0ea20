#include "vulbin/reasoner/report.hpp"

#include "vulbin/common/error.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/reasoner/knowledge.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>

namespace vulbin::reasoner {

bool BinaryReport::flagged(const std::string& cwe) const {
    auto it = per_cwe.find(cwe);
    return it != per_cwe.end() && it->second == "yes";
}

BinaryReport aggregate(const memory::AnalysisQueue& queue, const ReportInfo& info) {
    if (!queue.is_terminal()) {
        throw Error(ErrorCode::QueueNotTerminal, "entries are still pending or in flight");
    }
    BinaryReport r;
    r.artifact_hash = info.artifact_hash;
    r.binary_name = info.binary_name;
    r.target_cwes = info.target_cwes;
    std::sort(r.target_cwes.begin(), r.target_cwes.end(), cwe_less);
    r.config_fingerprint = info.config_fingerprint;
    r.seed = info.seed;
    r.model_tag = info.model_tag;
    r.coverage = queue.coverage_report();

    std::map<std::string, bool> yes, incomplete;
    for (const auto& e : queue.entries()) {
        FunctionRow row;
        row.function_id = e.function_id;
        row.address = text::hex_address(e.address);
        row.state = std::string(memory::to_string(e.state));
        row.last_error = e.last_error.value_or("");
        if (e.state == memory::EntryState::done) {
            if (auto rec = queue.record(e.function_id)) {
                for (const auto& v : rec->verdicts) row.verdicts[v.cwe_id] = v.verdict;
                for (const auto& s : rec->suspected) row.suspected.push_back(s.cwe_id);
            }
        }
        for (const auto& cwe : r.target_cwes) {
            if (e.state == memory::EntryState::failed) {
                incomplete[cwe] = true;
                continue;
            }
            if (e.state != memory::EntryState::done) continue;
            auto it = row.verdicts.find(cwe);
            if (it == row.verdicts.end() || it->second == "invalid") incomplete[cwe] = true;
            else if (it->second == "yes") yes[cwe] = true;
        }
        r.functions.push_back(std::move(row));
    }
    for (const auto& cwe : r.target_cwes) {
        r.per_cwe[cwe] = yes[cwe] ? "yes" : incomplete[cwe] ? "incomplete" : "no";
    }
    return r;
}

std::string report_json(const BinaryReport& r) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["artifact_hash"] = r.artifact_hash;
    j["binary"] = r.binary_name;
    j["config_fingerprint"] = r.config_fingerprint;
    j["seed"] = r.seed;
    j["model_tag"] = r.model_tag;
    j["target_cwes"] = r.target_cwes;
    ordered_json per = ordered_json::object();
    for (const auto& cwe : r.target_cwes) per[cwe] = r.per_cwe.at(cwe);
    j["per_cwe"] = per;
    j["coverage"] = {{"total", r.coverage.total()},   {"done", r.coverage.done},
                     {"failed", r.coverage.failed},   {"skipped", r.coverage.skipped},
                     {"pending", r.coverage.pending}, {"in_flight", r.coverage.in_flight}};
    auto failures = ordered_json::array();
    for (const auto& [id, reason] : r.coverage.failures) failures.push_back({{"function_id", id}, {"reason", reason}});
    j["coverage"]["failures"] = failures;
    auto fns = ordered_json::array();
    for (const auto& f : r.functions) {
        ordered_json row;
        row["function_id"] = f.function_id;
        row["address"] = f.address;
        row["state"] = f.state;
        ordered_json v = ordered_json::object();
        for (const auto& [cwe, verdict] : f.verdicts) v[cwe] = verdict;
        row["verdicts"] = v;
        row["suspected"] = f.suspected;
        if (!f.last_error.empty()) row["last_error"] = f.last_error;
        fns.push_back(std::move(row));
    }
    j["functions"] = fns;
    return j.dump(2) + "\n";
}

std::string report_markdown(const BinaryReport& r) {
    std::ostringstream out;
    out << "# Vulnerability report: " << (r.binary_name.empty() ? r.artifact_hash : r.binary_name) << "\n\n";
    out << "- artifact: `" << r.artifact_hash << "`\n";
    out << "- config fingerprint: `" << r.config_fingerprint << "`\n";
    out << "- seed: " << r.seed << "\n";
    out << "- model: " << r.model_tag << "\n\n";
    out << "## Verdicts\n\n| CWE | Verdict |\n|---|---|\n";
    for (const auto& cwe : r.target_cwes) out << "| " << cwe << " | " << r.per_cwe.at(cwe) << " |\n";
    out << "\n## Coverage\n\n| total | done | failed | skipped | pending |\n|---|---|---|---|---|\n";
    out << "| " << r.coverage.total() << " | " << r.coverage.done << " | " << r.coverage.failed << " | "
        << r.coverage.skipped << " | " << r.coverage.pending << " |\n";
    if (!r.coverage.failures.empty()) {
        out << "\nFailed functions:\n\n";
        for (const auto& [id, reason] : r.coverage.failures) out << "- `" << id << "`: " << reason << "\n";
    }
    out << "\n## Functions\n\n| address | state |";
    for (const auto& cwe : r.target_cwes) out << " " << cwe << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < r.target_cwes.size(); ++i) out << "---|";
    out << "\n";
    for (const auto& f : r.functions) {
        out << "| " << f.address << " | " << f.state << " |";
        for (const auto& cwe : r.target_cwes) {
            auto it = f.verdicts.find(cwe);
            out << " " << (it == f.verdicts.end() ? "-" : it->second) << " |";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace vulbin::reasoner
