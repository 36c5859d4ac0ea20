#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::reasoner {

struct KnowledgeDoc {
    std::string cwe_id;  // "CWE-78"
    std::string name;
    std::string description;
    std::string vulnerable_example;
    std::string patched_example;
};

inline const std::vector<std::string> kRequiredCwes = {"CWE-78", "CWE-134", "CWE-190", "CWE-606"};
inline const std::vector<std::string> kDistractorPool = {"CWE-121", "CWE-787", "CWE-416", "CWE-476"};

bool valid_cwe_id(std::string_view id);

// Numeric order: CWE-78 < CWE-121.
bool cwe_less(std::string_view a, std::string_view b);

// Throws Error{KnowledgeError} naming the source and the offending field.
KnowledgeDoc parse_knowledge_doc(std::string_view json_text, std::string_view source = "<memory>");

class KnowledgeBase {
public:
    KnowledgeBase() = default;

    // Loads every *.json file. Errors: KnowledgeError (malformed doc,
    // duplicate id, missing required CWE when `require` is set).
    static KnowledgeBase load_dir(const std::filesystem::path& dir, bool require = true);

    void add(KnowledgeDoc doc);
    const KnowledgeDoc* find(std::string_view cwe_id) const;
    const KnowledgeDoc& at(std::string_view cwe_id) const;  // Error{KnowledgeError}
    std::vector<std::string> ids() const;                   // numeric order
    std::size_t size() const { return docs_.size(); }

    // Required CWE ids that have no document.
    std::vector<std::string> missing(const std::vector<std::string>& required = kRequiredCwes) const;

private:
    std::map<std::string, KnowledgeDoc> docs_;
};

}  // namespace vulbin::reasoner
