#pragma once

#include "tracewrite/corpus.hpp"
#include "tracewrite/providers.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tracewrite {

struct TopicSpec {
    std::string topic;
    std::string description;

    void validate() const;
    std::string query_text() const;
};

struct RetrievalConfig {
    double similarity_threshold = 0.3;
    double relevance_threshold = 70.0;
    std::size_t fallback_top_n = 5;
    std::size_t per_query_cap = 30;
    std::size_t expansion_top_m = 10;
    std::size_t search_limit = 100;     // records requested per backend query
    std::size_t link_limit = 50;        // per seed and direction
    std::size_t scoring_batch_size = 10;
    bool expansion_enabled = true;

    void validate() const;
    json to_json() const;
    static RetrievalConfig from_json(const json& j);
};

/// A paper moving through the pipeline with its filter cosine (absent for
/// abstractless papers that bypassed the filter).
struct Candidate {
    PaperRecord paper;
    std::optional<double> cosine;
};

/// 3 to 10 trimmed, case-insensitively unique keywords. An empty or
/// degenerate reply is retried once before failing.
std::vector<std::string> generate_keywords(const TopicSpec& spec, LlmClient& llm);

/// Keeps candidates whose abstract embedding has cosine >= threshold with the
/// query embedding, in input order. Abstractless candidates pass through
/// with no cosine and a warning.
std::vector<Candidate> semantic_filter(const std::vector<PaperRecord>& candidates, const std::string& query,
                                       double threshold, EmbeddingProvider& embedder, Diagnostics& diagnostics);

/// Union of references and citations of the seeds, deduplicated, seeds
/// excluded. A seed whose lookups fail is skipped with a warning.
std::vector<PaperRecord> expand_citations(const std::vector<PaperRecord>& seeds, ScholarlyProvider& scholarly,
                                          std::size_t link_limit, Diagnostics& diagnostics);

/// Scores every paper in [0, 100], batched. A failed batch scores 0.
std::vector<PaperRecord> score_relevance(std::vector<PaperRecord> papers, const TopicSpec& spec, LlmClient& llm,
                                         Diagnostics& diagnostics, std::size_t batch_size = 10);

/// Papers at or above the relevance threshold, best first, capped; when none
/// pass, the fallback top-n. Order: score desc, year desc, bibkey asc.
std::vector<PaperRecord> select_final(std::vector<PaperRecord> papers, const RetrievalConfig& config);

struct RetrievalReport {
    std::vector<std::string> keywords;
    std::size_t searched = 0;        // unique records returned by search
    std::size_t filtered = 0;        // after the first semantic filter
    std::size_t expanded = 0;        // new records from citation expansion
    std::size_t expanded_kept = 0;   // expansion records surviving the filter
    std::size_t scored = 0;
    bool insufficient_corpus = false;
    std::vector<std::string> bibkeys;  // the final set, as stored

    json to_json() const;
};

/// Keyword generation, search, filter, expansion, filter, scoring and
/// selection. The final set is upserted into `store` under `tag`.
RetrievalReport run_retrieval(const TopicSpec& query_spec, const std::string& filter_query,
                              const RetrievalConfig& config, Providers& providers, PaperStore& store,
                              const std::string& tag);

RetrievalReport survey_level_retrieve(const TopicSpec& spec, const RetrievalConfig& config, Providers& providers,
                                      PaperStore& store);

struct SubsectionQuery {
    std::string id;
    std::string section_title;
    std::string section_description;
    std::string title;
    std::string description;
};

/// Same pipeline driven by the subsection text; records are tagged
/// "subsection:<id>".
RetrievalReport subsection_retrieve(const SubsectionQuery& query, const RetrievalConfig& config, Providers& providers,
                                    PaperStore& store);

}  // namespace tracewrite
