#pragma once

#include "tracewrite/common.hpp"
#include "tracewrite/paper.hpp"
#include "tracewrite/providers.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

namespace provenance {
inline const std::string kSurveyLevel = "survey-level";
inline const std::string kTraced = "traced";
inline std::string subsection(const std::string& id) { return "subsection:" + id; }
}  // namespace provenance

class UnknownBibkey : public Error {
public:
    explicit UnknownBibkey(const std::string& key) : Error("unknown bibkey: " + key) {}
};

/// Papers keyed by bibkey with the retrieval stages that produced them.
struct PaperStore {
    std::map<std::string, PaperRecord> records;
    std::map<std::string, std::set<std::string>> provenance;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    bool contains(const std::string& bibkey) const { return records.count(bibkey) > 0; }
    const PaperRecord& at(const std::string& bibkey) const;
    /// Bibkey holding `paper_id`, or empty string.
    std::string bibkey_for_paper_id(const std::string& paper_id) const;
    std::vector<std::string> keys_with_tag(const std::string& tag) const;
    bool has_tag(const std::string& bibkey, const std::string& tag) const;
    /// Throws Error when a store invariant is broken.
    void check_invariants() const;

    bool operator==(const PaperStore&) const = default;
};

/// Inserts or merges records; returns the bibkey assigned to each input, in
/// input order. Paper-id collisions merge into the existing record, which
/// keeps its bibkey and gains full text or missing fields from the newcomer.
/// New bibkeys follow make_bibkey_base() with "-b", "-c", ... on collision.
std::vector<std::string> upsert(PaperStore& store, std::vector<PaperRecord> records, const std::string& provenance_tag);

/// Copies the given bibkeys (and their provenance) out of `store`.
PaperStore subset(const PaperStore& store, const std::set<std::string>& bibkeys);

json record_to_json(const PaperRecord& record);
PaperRecord record_from_json(const json& j);
/// Lossless JSON form used by checkpoints.
json store_to_json(const PaperStore& store);
PaperStore store_from_json(const json& j);

// CSV persistence. Columns:
//   bibkey,paper_id,title,abstract,year,url,is_review,relevance_score,provenance,authors
// Full texts live in "<stem>_fulltext/<bibkey>.txt" next to the CSV.

void save_csv(const PaperStore& store, const std::filesystem::path& path);

struct CsvLoadResult {
    PaperStore store;
    std::size_t skipped_rows = 0;
};

/// Malformed rows are skipped with a warning each.
CsvLoadResult load_csv(const std::filesystem::path& path, Diagnostics& diagnostics);

/// RFC 4180 field quoting.
std::string csv_escape(const std::string& field);
/// Parses CSV text into rows of fields. Quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Vector index
// ---------------------------------------------------------------------------

struct ChunkingOptions {
    std::size_t chunk_size = 1000;
    std::size_t overlap = 200;
};

/// Fixed-size character windows with overlap; never splits a UTF-8 sequence.
std::vector<std::string> chunk_text(const std::string& text, const ChunkingOptions& options = {});

struct IndexEntry {
    std::string key;     // bibkey for the abstract entry, "bibkey#c<n>" for chunks
    std::string bibkey;
    std::string text;
    Embedding embedding;
};

struct SearchHit {
    std::size_t entry = 0;
    double score = 0.0;
};

class VectorIndex {
public:
    void add(IndexEntry entry);
    const std::vector<IndexEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dimension() const { return dimension_; }

    /// Top-k entries by cosine, descending; ties keep insertion order.
    /// When `only` is non-empty, entries whose bibkey is not in it are skipped.
    std::vector<SearchHit> search(const Embedding& query, std::size_t k,
                                  const std::set<std::string>& only = {}) const;

private:
    std::vector<IndexEntry> entries_;
    std::map<std::string, std::size_t> by_key_;
    std::size_t dimension_ = 0;
};

/// One entry per record over "title\n\nabstract", plus chunk entries for full
/// texts. `only` restricts to a bibkey subset when non-empty.
VectorIndex build_index(const PaperStore& store, EmbeddingProvider& embedder, const ChunkingOptions& chunking = {},
                        const std::set<std::string>& only = {});

// ---------------------------------------------------------------------------
// Bibliography
// ---------------------------------------------------------------------------

/// One @misc entry per cited bibkey, sorted by bibkey. Absent fields are
/// omitted. Throws UnknownBibkey.
std::string compile_bibtex(const PaperStore& store, const std::set<std::string>& cited);

std::string latex_escape(std::string_view s);

}  // namespace tracewrite
