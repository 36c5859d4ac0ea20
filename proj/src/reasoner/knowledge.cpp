#include "vulbin/reasoner/knowledge.hpp"

#include "vulbin/common/error.hpp"
#include "vulbin/common/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <regex>

namespace vulbin::reasoner {

namespace {

const std::regex kCwePattern(R"(^CWE-[0-9]+$)");

unsigned long cwe_number(std::string_view id) {
    auto dash = id.find('-');
    if (dash == std::string_view::npos) return 0;
    try {
        return std::stoul(std::string(id.substr(dash + 1)));
    } catch (...) {
        return 0;
    }
}

}  // namespace

bool valid_cwe_id(std::string_view id) { return std::regex_match(id.begin(), id.end(), kCwePattern); }

bool cwe_less(std::string_view a, std::string_view b) {
    auto na = cwe_number(a), nb = cwe_number(b);
    return na != nb ? na < nb : a < b;
}

KnowledgeDoc parse_knowledge_doc(std::string_view json_text, std::string_view source) {
    const std::string where(source);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::KnowledgeError, where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::KnowledgeError, where + ": top level must be an object");
    auto field = [&](const char* name) {
        if (!j.contains(name)) throw Error(ErrorCode::KnowledgeError, where + ": missing field '" + name + "'");
        if (!j[name].is_string()) throw Error(ErrorCode::KnowledgeError, where + ": field '" + name + "' must be a string");
        auto value = j[name].get<std::string>();
        if (text::trim(value).empty()) throw Error(ErrorCode::KnowledgeError, where + ": field '" + name + "' is empty");
        return value;
    };
    KnowledgeDoc doc{field("cwe_id"), field("name"), field("description"), field("vulnerable_example"),
                     field("patched_example")};
    if (!valid_cwe_id(doc.cwe_id)) {
        throw Error(ErrorCode::KnowledgeError, where + ": field 'cwe_id' must look like CWE-<number>");
    }
    return doc;
}

KnowledgeBase KnowledgeBase::load_dir(const std::filesystem::path& dir, bool require) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw Error(ErrorCode::KnowledgeError, dir.string() + ": not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    KnowledgeBase kb;
    for (const auto& f : files) {
        std::string content;
        try {
            content = text::read_file(f);
        } catch (const Error& e) {
            throw Error(ErrorCode::KnowledgeError, e.what());
        }
        auto doc = parse_knowledge_doc(content, f.string());
        if (kb.find(doc.cwe_id)) throw Error(ErrorCode::KnowledgeError, f.string() + ": duplicate " + doc.cwe_id);
        kb.add(std::move(doc));
    }
    if (require) {
        auto gaps = kb.missing();
        if (!gaps.empty()) {
            throw Error(ErrorCode::KnowledgeError, dir.string() + ": missing required document(s) " + text::join(gaps, ", "));
        }
    }
    return kb;
}

void KnowledgeBase::add(KnowledgeDoc doc) {
    auto id = doc.cwe_id;
    docs_.insert_or_assign(id, std::move(doc));
}

const KnowledgeDoc* KnowledgeBase::find(std::string_view cwe_id) const {
    auto it = docs_.find(std::string(cwe_id));
    return it == docs_.end() ? nullptr : &it->second;
}

const KnowledgeDoc& KnowledgeBase::at(std::string_view cwe_id) const {
    if (auto* d = find(cwe_id)) return *d;
    throw Error(ErrorCode::KnowledgeError, "no knowledge document for " + std::string(cwe_id));
}

std::vector<std::string> KnowledgeBase::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, doc] : docs_) out.push_back(id);
    std::sort(out.begin(), out.end(), cwe_less);
    return out;
}

std::vector<std::string> KnowledgeBase::missing(const std::vector<std::string>& required) const {
    std::vector<std::string> out;
    for (const auto& id : required) {
        if (!find(id)) out.push_back(id);
    }
    return out;
}

}  // namespace vulbin::reasoner
