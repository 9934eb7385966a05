#pragma once

#include "tracewrite/corpus.hpp"
#include "tracewrite/providers.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

enum class TableKind { Aggregation, Aspect };

std::string to_string(TableKind kind);

constexpr std::size_t kAggregationThreshold = 10;
constexpr const char* kNotReported = "not reported";
constexpr const char* kMarked = "x";

/// Cells may hold \cite{bibkey} placeholders; the first column names the
/// paper (aspect tables) or is the paper column of the category grid
/// (aggregation tables).
struct GeneratedTable {
    TableKind kind = TableKind::Aspect;
    std::string subsection_id;
    std::string caption;
    std::string core_aspect;  // aggregation only
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::set<std::string> cited;

    /// Throws Error when the table is not rectangular, cites unknown keys or
    /// has a column count outside its kind's range.
    void validate(const PaperStore& store) const;
    json to_json() const;
    static GeneratedTable from_json(const json& j);

    bool operator==(const GeneratedTable&) const = default;
};

/// Aggregation iff `paper_count` >= 10. Throws PreconditionError for 0.
TableKind decide_table_kind(std::size_t paper_count);

struct TableRequest {
    std::string subsection_id;
    std::string title;
    std::string description;
    std::string subsection_text;
    std::vector<PaperRecord> papers;  // non-review, with bibkeys
};

/// Categories with fewer than two papers and "Others" are removed. Returns
/// the surviving categories in proposal order.
std::vector<std::string> prune_categories(const std::vector<std::string>& categories,
                                          const std::map<std::string, std::vector<std::string>>& members);

/// Core aspect, 4-6 proposed categories, per-paper classification over
/// retrieved evidence, pruning. Fewer than two surviving categories trigger
/// one new proposal; if that also fails the aspect table is built instead
/// over the first nine papers.
GeneratedTable build_aggregation_table(const TableRequest& request, const VectorIndex& index, Providers& providers);

/// Papers as rows, 3-5 selected aspects as columns. Each cell summarizes
/// retrieved evidence; cells without evidence or whose summary fails are
/// "not reported".
GeneratedTable build_aspect_table(const TableRequest& request, const VectorIndex& index, Providers& providers);

/// Chooses the kind by paper count and builds it.
GeneratedTable build_table(const TableRequest& request, const VectorIndex& index, Providers& providers);

}  // namespace tracewrite
