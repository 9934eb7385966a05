#pragma once

#include "tracewrite/corpus.hpp"
#include "tracewrite/tables.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

struct DocSubsection {
    std::string id;
    std::string title;
    std::string text;  // \cite{bibkey} placeholders
};

struct DocSection {
    std::string title;
    std::vector<DocSubsection> subsections;
};

/// Assembled survey in outline order. Tables are keyed by subsection id.
struct SurveyDocument {
    std::string title;
    std::vector<DocSection> sections;
    std::map<std::string, GeneratedTable> tables;
    /// Traced bibkey -> bibkeys of the passages it was traced from.
    std::map<std::string, std::set<std::string>> traced_from;

    std::set<std::string> cited() const;
    bool is_traced(const std::string& bibkey) const { return traced_from.count(bibkey) > 0; }
    /// Throws Error when a citation has no record in `store`.
    void validate(const PaperStore& store) const;
};

/// "Authors (Year). Title. URL" with at most three authors.
std::string reference_text(const PaperRecord& record);

/// Headings, paragraphs, pipe tables and a "References" list of
/// "- [key] ..." lines. Citations become [@key]; traced ones [@key]*.
std::string render_markdown(const SurveyDocument& doc, const PaperStore& store);

/// Article source citing through \cite{key} (traced: \cite{key}$^{*}$) and a
/// BibTeX file named `bib_name`.bib.
std::string render_latex(const SurveyDocument& doc, const PaperStore& store, const std::string& bib_name = "references");

}  // namespace tracewrite
