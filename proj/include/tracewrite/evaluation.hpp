#pragma once

#include "tracewrite/providers.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

/// One bibliography entry of an evaluated document.
struct BibEntry {
    std::string id;  // citation key, or the number of a "[n]" entry
    std::string text;
    std::string title;
    std::string surname;  // first author, lowercase
    std::optional<int> year;
};

struct ParsedDocument {
    std::string body;  // everything before the reference section
    std::vector<BibEntry> bibliography;
    bool has_reference_section = false;
};

/// Splits a Markdown or LaTeX document into body and bibliography. The
/// reference section starts at a "References" or "Bibliography" heading,
/// \section*{References}, \begin{thebibliography} or \bibliography{...}.
/// Entries are "- [key] ...", "[n] ...", "\bibitem{key} ..." or plain list
/// items. `bibtex`, when given, adds its entries. Throws ParseError for
/// empty, binary or non-UTF-8 input.
ParsedDocument parse_document(const std::string& text, const std::string& bibtex = "");

/// @type{key, field = {value}, ...} entries; only key, author, title and
/// year are kept.
std::vector<BibEntry> parse_bibtex(const std::string& text);

/// Body text with citation markup, heading hashes, emphasis markers and
/// LaTeX commands removed; visible words, numeric and author-year markers
/// are kept.
std::string visible_text(const std::string& body);

/// Unicode scalar values of `visible_text`, newlines excluded.
std::size_t body_character_count(const std::string& body);

struct BodyMarker {
    std::string identity;  // "key:<k>", "num:<n>" or "ay:<surname>:<year>"
    std::string surface;
};

/// Citation markers in the body in order of appearance, repeats included:
/// [@a; @b] groups, \cite-family commands, numeric brackets and author-year
/// forms.
std::vector<BodyMarker> body_markers(const std::string& body);

struct DocumentStats {
    std::string body_text;
    std::size_t marker_occurrences = 0;
    std::size_t unique_markers = 0;
    std::size_t body_characters = 0;
    std::set<std::string> cited_works;
    std::map<std::string, std::optional<int>> work_years;
};

/// Resolves markers to works: keys and numbers through the bibliography
/// entry with that id, author-year markers through a unique entry with the
/// same first-author surname and year. Unresolved markers count as their
/// own work.
DocumentStats analyze_document(const ParsedDocument& doc, Diagnostics& diagnostics);

struct MetricsReport {
    std::size_t nr = 0;
    double cd = 0.0;
    std::map<int, std::optional<double>> rr;  // absent value: no dated works
    std::size_t undated = 0;
    std::size_t unique_markers = 0;
    std::size_t body_characters = 0;
    int reference_year = 0;

    json to_json() const;
};

std::size_t count_references(const DocumentStats& stats);
/// Unique markers per body character, times 10^4. Throws PreconditionError
/// for an empty body.
double citation_density(const DocumentStats& stats);
/// Share of dated works with year >= reference_year - k + 1.
std::optional<double> recency_ratio(const DocumentStats& stats, int k, int reference_year);

MetricsReport compute_metrics(const DocumentStats& stats, const std::vector<int>& k_list, int reference_year);

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

struct JudgeScores {
    double coverage = 0, relevance = 0, structure = 0, synthesis = 0, consistency = 0;
    std::string explanation;

    double cqs() const;
    json to_json() const;
};

/// Scores outside [1, 5] are clamped with a warning. CQS is always the local
/// mean. Malformed replies surface as SchemaViolation after the client's
/// reprompt.
JudgeScores judge_quality(const std::string& document, LlmClient& llm, Diagnostics& diagnostics);

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string system;
    MetricsReport metrics;
    std::optional<JudgeScores> judge;
};

/// Markdown table: System, RR@k for each k, CD, NR, and CQS when any row
/// has judge scores.
std::string render_comparison_table(const std::vector<ComparisonRow>& rows, const std::vector<int>& k_list);

/// Same columns as CSV for external plotting.
std::string render_comparison_csv(const std::vector<ComparisonRow>& rows, const std::vector<int>& k_list);

}  // namespace tracewrite
