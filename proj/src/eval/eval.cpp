#include "vulbin/eval/eval.hpp"

#include "vulbin/common/error.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/reasoner/knowledge.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

namespace vulbin::eval {

namespace {

// Minimal CSV field splitter with double-quote support.
std::vector<std::string> csv_fields(std::string_view line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(text::trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unterminated quote");
    out.emplace_back(text::trim(cur));
    return out;
}

std::string pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", percent(fraction));
    return buf;
}

}  // namespace

std::vector<GroundTruthEntry> parse_manifest(std::string_view csv, const std::filesystem::path& base_dir) {
    auto lines = text::split_lines(csv);
    std::size_t i = 0;
    while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
    if (i == lines.size()) throw Error(ErrorCode::ParseError, "line 1: manifest is empty");
    auto header = csv_fields(text::trim(lines[i]), i + 1);
    const std::vector<std::string> expected = {"case_id", "binary_path", "cwe_id", "label"};
    if (header.size() != expected.size() ||
        !std::equal(header.begin(), header.end(), expected.begin(),
                    [](const std::string& a, const std::string& b) { return text::iequals(a, b); })) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(i + 1) + ": header must be case_id,binary_path,cwe_id,label");
    }
    std::vector<GroundTruthEntry> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (++i; i < lines.size(); ++i) {
        auto raw = text::trim(lines[i]);
        if (raw.empty()) continue;
        const auto line_no = i + 1;
        auto where = "line " + std::to_string(line_no) + ": ";
        auto f = csv_fields(raw, line_no);
        if (f.size() != 4) throw Error(ErrorCode::ParseError, where + "expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty()) throw Error(ErrorCode::ParseError, where + "empty case_id");
        if (f[1].empty()) throw Error(ErrorCode::ParseError, where + "empty binary_path");
        if (!reasoner::valid_cwe_id(f[2])) throw Error(ErrorCode::ParseError, where + "bad cwe_id '" + f[2] + "'");
        GroundTruthEntry e;
        e.case_id = f[0];
        std::filesystem::path bin(f[1]);
        e.binary_path = bin.is_absolute() || base_dir.empty() ? bin : base_dir / bin;
        e.cwe_id = f[2];
        if (text::iequals(f[3], "bad")) e.label = Label::bad;
        else if (text::iequals(f[3], "good")) e.label = Label::good;
        else throw Error(ErrorCode::ParseError, where + "label must be bad or good, got '" + f[3] + "'");
        if (!seen.emplace(e.case_id, e.cwe_id).second) {
            throw Error(ErrorCode::DuplicateCase, where + e.case_id + " / " + e.cwe_id + " listed twice");
        }
        out.push_back(std::move(e));
    }
    if (out.empty()) throw Error(ErrorCode::ParseError, "line " + std::to_string(lines.size()) + ": manifest has no cases");
    return out;
}

std::vector<GroundTruthEntry> load_manifest(const std::filesystem::path& path) {
    std::string content;
    try {
        content = text::read_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    return parse_manifest(content, path.parent_path());
}

std::map<std::string, ConfusionCounts> score(const CaseVerdicts& verdicts, const std::vector<GroundTruthEntry>& truth) {
    std::map<std::string, ConfusionCounts> out;
    for (const auto& e : truth) {
        auto& c = out[e.cwe_id];
        auto cit = verdicts.find(e.case_id);
        if (cit == verdicts.end() || !cit->second.contains(e.cwe_id)) {
            ++c.missing;
            continue;
        }
        bool flagged = cit->second.at(e.cwe_id);
        if (e.label == Label::bad) ++(flagged ? c.tp : c.fn);
        else ++(flagged ? c.fp : c.tn);
    }
    return out;
}

MetricsRow metrics(const ConfusionCounts& c, std::string cwe_id) {
    if (c.total() == 0) throw Error(ErrorCode::EmptyCounts, "no scored cases" + (cwe_id.empty() ? "" : " for " + cwe_id));
    MetricsRow m;
    m.cwe_id = std::move(cwe_id);
    auto d = [](std::uint64_t x) { return static_cast<double>(x); };
    m.accuracy = d(c.tp + c.tn) / d(c.total());
    m.precision = c.tp + c.fp == 0 ? 0.0 : d(c.tp) / d(c.tp + c.fp);
    m.recall = c.tp + c.fn == 0 ? 0.0 : d(c.tp) / d(c.tp + c.fn);
    m.f1 = m.precision + m.recall == 0 ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

double percent(double fraction) {
    // The epsilon absorbs binary representation error at exact half-way points.
    return std::floor(fraction * 10000.0 + 0.5 + 1e-9) / 100.0;
}

std::vector<std::string> assembly_tokens(std::string_view assembly) {
    static const std::string_view kSeparators = " \t,";
    std::vector<std::string> out;
    for (auto line : text::split_lines(assembly)) {
        std::string_view l = line;
        // objdump: "  401126:\t55 48 89\tpush   %rbp"
        auto colon = l.find(':');
        if (colon != std::string_view::npos && colon > 0) {
            auto head = text::trim(l.substr(0, colon));
            bool hex = !head.empty() && std::all_of(head.begin(), head.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
            if (hex && colon + 1 < l.size() && l[colon + 1] == '\t') {
                auto rest = l.substr(colon + 2);
                auto tab = rest.find('\t');
                if (tab == std::string_view::npos) continue;  // byte continuation line
                l = rest.substr(tab + 1);
            }
        }
        for (std::string_view marker : {"#", ";", "//"}) {
            auto at = l.find(marker);
            if (at != std::string_view::npos) l = l.substr(0, at);
        }
        l = text::trim(l);
        // Leading labels, including objdump's "0000000000401126 <main>:".
        while (!l.empty()) {
            auto end = l.find_first_of(" \t");
            auto word = l.substr(0, end);
            if (!word.empty() && word.back() == ':') {
                l = end == std::string_view::npos ? std::string_view{} : text::trim(l.substr(end));
                continue;
            }
            if (l.back() == ':' && l.find('<') != std::string_view::npos) l = {};
            break;
        }
        if (l.empty() || l.front() == '.') continue;
        std::size_t pos = 0;
        while (pos < l.size()) {
            auto start = l.find_first_not_of(kSeparators, pos);
            if (start == std::string_view::npos) break;
            auto end = l.find_first_of(kSeparators, start);
            if (end == std::string_view::npos) end = l.size();
            out.emplace_back(l.substr(start, end - start));
            pos = end;
        }
    }
    return out;
}

Similarity assembly_similarity(std::string_view a, std::string_view b) {
    auto ta = assembly_tokens(a);
    auto tb = assembly_tokens(b);
    if (ta.empty() || tb.empty()) throw Error(ErrorCode::EmptyInput, "assembly text has no instructions");
    if (ta == tb) return {1.0, 1.0};

    std::unordered_map<std::string, std::pair<double, double>> freq;
    for (const auto& t : ta) freq[t].first += 1;
    for (const auto& t : tb) freq[t].second += 1;
    double dot = 0, na = 0, nb = 0;
    for (const auto& [tok, f] : freq) {
        dot += f.first * f.second;
        na += f.first * f.first;
        nb += f.second * f.second;
    }
    Similarity s;
    s.cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);

    std::vector<std::size_t> prev(tb.size() + 1), cur(tb.size() + 1);
    for (std::size_t j = 0; j <= tb.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= ta.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= tb.size(); ++j) {
            std::size_t sub = prev[j - 1] + (ta[i - 1] == tb[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    double dist = static_cast<double>(prev[tb.size()]);
    s.levenshtein_norm = std::clamp(1.0 - dist / static_cast<double>(std::max(ta.size(), tb.size())), 0.0, 1.0);
    return s;
}

ToolMetrics load_baseline(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    ToolMetrics out;
    try {
        out.tool = j.value("tool", std::string("baseline"));
        for (const auto& [cwe, v] : j.at("cwes").items()) {
            const auto& c = v.contains("counts") ? v.at("counts") : v;
            out.counts[cwe] = {c.at("tp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
                               c.at("tn").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(),
                               c.value("missing", std::uint64_t{0})};
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return out;
}

std::string report_json(const ToolMetrics& m, const std::optional<ToolMetrics>& baseline) {
    using nlohmann::ordered_json;
    auto section = [](const ToolMetrics& t) {
        ordered_json j;
        j["tool"] = t.tool;
        ordered_json cwes = ordered_json::object();
        std::vector<std::string> ids;
        for (const auto& [id, c] : t.counts) ids.push_back(id);
        std::sort(ids.begin(), ids.end(), reasoner::cwe_less);
        for (const auto& id : ids) {
            const auto& c = t.counts.at(id);
            ordered_json row;
            row["counts"] = {{"tp", c.tp}, {"fn", c.fn}, {"tn", c.tn}, {"fp", c.fp}, {"missing", c.missing}};
            if (c.total() > 0) {
                auto r = metrics(c, id);
                row["metrics"] = {{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
                row["percent"] = {{"accuracy", percent(r.accuracy)},
                                  {"precision", percent(r.precision)},
                                  {"recall", percent(r.recall)},
                                  {"f1", percent(r.f1)}};
            } else {
                row["metrics"] = nullptr;
            }
            cwes[id] = row;
        }
        j["cwes"] = cwes;
        return j;
    };
    ordered_json j = section(m);
    if (baseline) j["baseline"] = section(*baseline);
    return j.dump(2) + "\n";
}

std::string report_markdown(const ToolMetrics& m, const std::optional<ToolMetrics>& baseline) {
    std::vector<std::string> ids;
    for (const auto& [id, c] : m.counts) ids.push_back(id);
    if (baseline) {
        for (const auto& [id, c] : baseline->counts) {
            if (!m.counts.contains(id)) ids.push_back(id);
        }
    }
    std::sort(ids.begin(), ids.end(), reasoner::cwe_less);
    std::vector<const ToolMetrics*> tools{&m};
    if (baseline) tools.push_back(&*baseline);

    auto cell = [](const ToolMetrics& t, const std::string& id, int row) -> std::string {
        auto it = t.counts.find(id);
        if (it == t.counts.end()) return "-";
        const auto& c = it->second;
        if (row == 0) {
            return std::to_string(c.tp) + " / " + std::to_string(c.fn) + " / " + std::to_string(c.tn) + " / " +
                   std::to_string(c.fp);
        }
        if (c.total() == 0) return "-";
        auto r = metrics(c, id);
        switch (row) {
        case 1: return pct(r.accuracy);
        case 2: return pct(r.precision);
        case 3: return pct(r.recall);
        default: return pct(r.f1);
        }
    };

    std::ostringstream out;
    out << "# Evaluation\n\n| Metric |";
    for (const auto& id : ids) {
        for (const auto* t : tools) out << " " << id << " " << t->tool << " |";
    }
    out << "\n|---|";
    for (std::size_t i = 0; i < ids.size() * tools.size(); ++i) out << "---|";
    out << "\n";
    const char* rows[] = {"TP / FN / TN / FP", "Accuracy", "Precision", "Recall", "F1 Score"};
    for (int row = 0; row < 5; ++row) {
        out << "| " << rows[row] << " |";
        for (const auto& id : ids) {
            for (const auto* t : tools) out << " " << cell(*t, id, row) << " |";
        }
        out << "\n";
    }
    std::uint64_t missing = 0;
    for (const auto& [id, c] : m.counts) missing += c.missing;
    if (missing > 0) out << "\nCases without a verdict: " << missing << "\n";
    return out.str();
}

void write_report(const std::filesystem::path& dir, const ToolMetrics& metrics_in,
                  const std::optional<ToolMetrics>& baseline) {
    text::write_file(dir / "report.json", report_json(metrics_in, baseline));
    text::write_file(dir / "report.md", report_markdown(metrics_in, baseline));
}

}  // namespace vulbin::eval
