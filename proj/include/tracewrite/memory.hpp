#pragma once

#include "tracewrite/common.hpp"
#include "tracewrite/providers.hpp"

#include <map>
#include <string>
#include <vector>

namespace tracewrite {

struct TermEntry {
    std::string term;
    std::string definition;
    std::string source;  // subsection id

    bool operator==(const TermEntry&) const = default;
};

/// Drafts of completed subsections and the terminology extracted from them.
struct StructureMemory {
    std::map<std::string, std::string> drafts;
    std::vector<TermEntry> terminology;

    /// Adds unless a term with the same case-folded spelling exists.
    bool add_term(TermEntry entry);
    bool has_term(const std::string& term) const;
    /// Drops drafts and terms of the given subsection.
    void erase(const std::string& subsection_id);

    json to_json() const;
    static StructureMemory from_json(const json& j);
    /// Compact form for prompts: terms plus a short excerpt of each draft.
    json prompt_json(std::size_t excerpt_chars = 400) const;

    bool operator==(const StructureMemory&) const = default;
};

constexpr std::size_t kMinTerms = 3;
constexpr std::size_t kMaxTerms = 15;

/// At most 15 terms with definitions, case-insensitively unique. Provider
/// errors propagate.
std::vector<TermEntry> extract_terminology(const std::string& subsection_id, const std::string& draft,
                                           LlmClient& llm, Diagnostics& diagnostics);

/// Stores the draft and merges `terms`.
void merge_into_memory(StructureMemory& memory, const std::string& subsection_id, const std::string& draft,
                       const std::vector<TermEntry>& terms);

/// extract_terminology + merge_into_memory; on extraction failure the draft
/// is stored alone with a warning.
StructureMemory update_memory(StructureMemory memory, const std::string& subsection_id, const std::string& draft,
                              LlmClient& llm, Diagnostics& diagnostics);

}  // namespace tracewrite
