#include "tracewrite/memory.hpp"

#include "tracewrite/citations.hpp"

#include <algorithm>

namespace tracewrite {

bool StructureMemory::add_term(TermEntry entry) {
    entry.term = trim(entry.term);
    if (entry.term.empty() || has_term(entry.term)) return false;
    terminology.push_back(std::move(entry));
    return true;
}

bool StructureMemory::has_term(const std::string& term) const {
    const auto key = to_lower(trim(term));
    return std::any_of(terminology.begin(), terminology.end(),
                       [&](const TermEntry& t) { return to_lower(t.term) == key; });
}

void StructureMemory::erase(const std::string& subsection_id) {
    drafts.erase(subsection_id);
    terminology.erase(std::remove_if(terminology.begin(), terminology.end(),
                                     [&](const TermEntry& t) { return t.source == subsection_id; }),
                      terminology.end());
}

json StructureMemory::to_json() const {
    json terms = json::array();
    for (const auto& t : terminology) {
        terms.push_back({{"term", t.term}, {"definition", t.definition}, {"source", t.source}});
    }
    return {{"drafts", drafts}, {"terminology", terms}};
}

StructureMemory StructureMemory::from_json(const json& j) {
    StructureMemory m;
    m.drafts = j.value("drafts", std::map<std::string, std::string>{});
    for (const auto& t : j.value("terminology", json::array())) {
        m.terminology.push_back({t.value("term", ""), t.value("definition", ""), t.value("source", "")});
    }
    return m;
}

json StructureMemory::prompt_json(std::size_t excerpt_chars) const {
    json terms = json::array();
    for (const auto& t : terminology) terms.push_back({{"term", t.term}, {"definition", t.definition}});
    json ds = json::array();
    for (const auto& [id, text] : drafts) {
        auto plain = strip_cites(text);
        if (plain.size() > excerpt_chars) {
            auto cut = plain.rfind(' ', excerpt_chars);
            plain = plain.substr(0, cut == std::string::npos ? excerpt_chars : cut) + " ...";
        }
        ds.push_back({{"id", id}, {"excerpt", plain}});
    }
    return {{"terms", terms}, {"drafts", ds}};
}

std::vector<TermEntry> extract_terminology(const std::string& subsection_id, const std::string& draft,
                                           LlmClient& llm, Diagnostics& diagnostics) {
    if (trim(draft).empty()) throw PreconditionError("extract_terminology: empty draft");
    auto reply = llm.complete_structured({PromptRole::TerminologyExtract, {{"title", subsection_id}, {"text", draft}}});
    std::vector<TermEntry> out;
    std::set<std::string> seen;
    for (const auto& t : reply.value.at("terms")) {
        auto term = trim(t.value("term", ""));
        if (term.empty() || !seen.insert(to_lower(term)).second) continue;
        if (out.size() == kMaxTerms) {
            diagnostics.warn("memory", "terminology for " + subsection_id + " truncated to 15 terms");
            break;
        }
        out.push_back({term, trim(t.value("definition", "")), subsection_id});
    }
    if (out.size() < kMinTerms) {
        diagnostics.warn("memory", "only " + std::to_string(out.size()) + " terms extracted for " + subsection_id);
    }
    return out;
}

void merge_into_memory(StructureMemory& memory, const std::string& subsection_id, const std::string& draft,
                       const std::vector<TermEntry>& terms) {
    if (trim(draft).empty()) throw PreconditionError("update_memory: empty draft");
    memory.drafts[subsection_id] = draft;
    for (const auto& t : terms) memory.add_term(t);
}

StructureMemory update_memory(StructureMemory memory, const std::string& subsection_id, const std::string& draft,
                              LlmClient& llm, Diagnostics& diagnostics) {
    if (trim(draft).empty()) throw PreconditionError("update_memory: empty draft");
    std::vector<TermEntry> terms;
    try {
        terms = extract_terminology(subsection_id, draft, llm, diagnostics);
    } catch (const ProviderError& e) {
        diagnostics.warn("memory", "terminology extraction failed for " + subsection_id + ": " + e.what());
    }
    merge_into_memory(memory, subsection_id, draft, terms);
    return memory;
}

}  // namespace tracewrite
