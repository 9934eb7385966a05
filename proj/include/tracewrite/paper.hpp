#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tracewrite {

/// One retrieved paper. `bibkey` is assigned by the PaperStore on upsert;
/// providers leave it empty.
struct PaperRecord {
    std::string bibkey;
    std::string paper_id;
    std::string title;
    std::string abstract;
    std::vector<std::string> authors;
    std::optional<int> year;
    std::optional<std::string> url;
    bool is_review = false;
    std::optional<std::string> full_text;
    std::optional<double> relevance_score;  // [0, 100]

    bool has_abstract() const;
    /// Full text when present, abstract otherwise.
    const std::string& best_text() const;

    bool operator==(const PaperRecord&) const = default;
};

/// Review detection from backend publication types, falling back to a title
/// keyword heuristic when the types are unknown.
bool detect_review(const std::vector<std::string>& publication_types, std::string_view title);

/// Last name of an author string ("Edward J. Hu" -> "Hu", "Hu, Edward" -> "Hu").
std::string author_surname(std::string_view author);

/// firstauthor + year + first non-stopword title token, lowercase ASCII.
/// Missing author becomes "anon", missing year "nd".
std::string make_bibkey_base(const PaperRecord& record);

}  // namespace tracewrite
