#pragma once

#include "tracewrite/citations.hpp"
#include "tracewrite/corpus.hpp"
#include "tracewrite/memory.hpp"
#include "tracewrite/providers.hpp"
#include "tracewrite/retrieval.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

struct Passage {
    std::string text;
    std::string bibkey;
    std::string entry_key;  // index entry ("bibkey" or "bibkey#c<n>")
    double rerank_score = 0.0;

    bool operator==(const Passage&) const = default;
};

struct RagOptions {
    std::size_t dense_k = 30;  // per source set
    std::size_t top_n = 10;
};

/// Dense top-k per source set, union, cross-scored by the reranker; the best
/// min(top_n, candidates) passages in descending rerank score (ties keep
/// candidate order). An empty index yields no passages and a warning.
std::vector<Passage> build_rag_context(const std::string& query, const VectorIndex& index,
                                       const std::vector<std::set<std::string>>& sources,
                                       EmbeddingProvider& embedder, RerankProvider& reranker,
                                       Diagnostics& diagnostics, const RagOptions& options = {});

struct TraceAssessment {
    CitationMarker marker;
    bool traceworthy = false;
    std::string explanation;
};

/// One assessment per marker. Missing or unparseable judgments default to
/// not traceworthy; a provider failure marks all of them so, with a warning.
std::vector<TraceAssessment> assess_traceworthiness(const std::vector<CitationMarker>& markers,
                                                    const std::string& title, const std::string& description,
                                                    const std::string& passage, LlmClient& llm,
                                                    Diagnostics& diagnostics);

struct TracedEntry {
    std::string bibkey;
    std::string title;
    std::string abstract;
    std::size_t passage_index = 0;  // back-link into base_passages
    std::string marker;             // surface as found in the passage

    bool operator==(const TracedEntry&) const = default;
};

struct EnrichedContext {
    std::vector<Passage> base_passages;
    std::vector<TracedEntry> traced;

    std::set<std::string> citable() const;
    json prompt_json() const;
};

/// Free text used to resolve a marker: the author-year surface, or for a
/// numeric marker the matching "[n] ..." line of the source paper's
/// reference list. Absent when a numeric marker has no such line.
std::optional<std::string> marker_reference_text(const CitationMarker& marker, const PaperRecord& source);

struct TraceMiss {
    std::string marker;
    std::size_t passage_index = 0;
    std::string reason;
};

struct EnrichResult {
    EnrichedContext context;
    std::vector<TraceMiss> misses;
};

/// Resolves traceworthy markers (each distinct reference text at most once),
/// upserts resolved papers into `store` tagged "traced" and links every
/// resolution back to the citing passage. `assessments[i]` belongs to
/// `rag[i]`.
EnrichResult enrich_context(const std::vector<Passage>& rag, const std::vector<std::vector<TraceAssessment>>& assessments,
                            ScholarlyProvider& scholarly, PaperStore& store, Diagnostics& diagnostics);

struct Skeleton {
    std::vector<std::string> points;
    std::vector<std::string> terminology;

    json to_json() const;
};

/// 3 to 10 points; terminology limited to terms present in memory. A reply
/// with fewer than 3 points is requested again once.
Skeleton make_skeleton(const std::string& title, const std::string& description, const StructureMemory& memory,
                       const EnrichedContext& context, LlmClient& llm);

/// Draft texts in candidate order. A draft citing keys outside the context
/// gets one repair request; drafts still citing unknown keys are dropped.
/// Throws StageError when no draft survives.
std::vector<std::string> write_candidates(const std::string& title, const std::string& description,
                                          const Skeleton& skeleton, const EnrichedContext& context,
                                          std::size_t n, std::size_t word_budget, LlmClient& llm,
                                          Diagnostics& diagnostics);

struct Selection {
    std::size_t index = 0;
    std::string justification;
};

/// A single draft wins without a judge call. Otherwise the judge picks; an
/// out-of-range pick falls back to 0, and identical texts resolve to the
/// earliest copy.
Selection select_best(const std::string& title, const Skeleton& skeleton, const std::vector<std::string>& drafts,
                      LlmClient& llm, Diagnostics& diagnostics);

struct PassReport {
    std::string pass;
    bool applied = false;
    std::string note;
};

struct RefineResult {
    std::string text;
    std::vector<PassReport> passes;
    std::vector<std::string> claim_sentences;
};

/// Structure, citation and polish passes in order. A pass whose output
/// breaks citation integrity, drops an existing citation, or leaves a
/// flagged claim sentence uncited is discarded with a warning.
RefineResult refine_subsection(const std::string& title, const std::string& draft, const Skeleton& skeleton,
                               const EnrichedContext& context, LlmClient& llm, Diagnostics& diagnostics);

/// Keys cited in `text` that are not in `allowed`.
std::set<std::string> unknown_citations(const std::string& text, const std::set<std::string>& allowed);

// ---------------------------------------------------------------------------

struct WriterOptions {
    std::size_t n_candidates = 3;
    std::size_t word_budget = 400;
    RagOptions rag;
    ChunkingOptions chunking;
    RetrievalConfig retrieval;
};

struct SubsectionTask {
    std::string id;
    std::string section_title;
    std::string section_description;
    std::string title;
    std::string description;
    bool retrieval = false;
};

struct SubsectionResult {
    std::string id;
    std::string text;
    std::vector<std::string> subsection_bibkeys;  // P_i, empty without retrieval
    std::vector<Passage> passages;
    std::vector<std::vector<TraceAssessment>> assessments;
    std::vector<TracedEntry> traced;
    std::vector<TraceMiss> misses;
    Skeleton skeleton;
    std::size_t candidates = 0;
    Selection selection;
    std::vector<PassReport> passes;

    /// Sidecar: markers, traced entries, skeleton, judge justification.
    json sidecar() const;
};

/// One subsection end to end: optional subsection retrieval, RAG over
/// P* ∪ P_i, tracing, skeleton, best-of-N and refinement. `store` is the
/// writer's private snapshot; new records land there.
SubsectionResult write_subsection(const SubsectionTask& task, const StructureMemory& memory, PaperStore& store,
                                  Providers& providers, const WriterOptions& options);

}  // namespace tracewrite
