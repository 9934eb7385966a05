#pragma once

// Backend interfaces: language model, embeddings, reranker, scholarly search
// graph and document text extraction. Every interface ships a live HTTP
// implementation (http_providers.hpp) and a seeded mock (mock_providers.hpp).

#include "tracewrite/common.hpp"
#include "tracewrite/paper.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tracewrite {

struct ProviderConfig {
    std::string endpoint;        // base URL; empty for mock
    std::string credential;      // secret, never logged
    std::string credential_env;  // environment variable the credential is read from
    std::string model;
    double timeout_seconds = 60.0;
    int max_retries = 2;
    std::optional<std::uint64_t> mock_seed;
    double requests_per_second = 0.0;  // 0 disables rate limiting
    int backoff_ms = 500;

    void validate() const;
    json to_json() const;  // credential redacted
    static ProviderConfig from_json(const json& j);
};

struct Embedding {
    std::vector<double> values;

    std::size_t dimension() const { return values.size(); }
    bool operator==(const Embedding&) const = default;
};

double cosine_similarity(const Embedding& a, const Embedding& b);

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

enum class PromptRole {
    KeywordGen,
    RelevanceScore,
    ReviewOutlineExtract,
    OutlineGen,
    OutlineRefine,
    RawPlan,
    DepGraph,
    Skeleton,
    SubsectionWrite,
    DraftSelect,
    Traceworthiness,
    TerminologyExtract,
    Revision,
    Refinement,
    GlobalDiagnosis,
    TableCoreAspect,
    TableCategories,
    TableClassify,
    TableAspects,
    TableCellSummary,
    Judge,
};

std::string to_string(PromptRole role);
PromptRole prompt_role_from_string(std::string_view name);
std::vector<PromptRole> all_prompt_roles();

/// A prompt addressed by role. Slots carry the data; the template registry
/// turns them into text for live backends, mocks read the slots directly.
struct StructuredPrompt {
    PromptRole role;
    std::map<std::string, std::string> slots;
};

/// Slot names each role's template declares.
const std::vector<std::string>& declared_slots(PromptRole role);

/// Renders the instruction text sent to a live model. Throws
/// PreconditionError when a declared slot is missing.
std::string render_prompt(const StructuredPrompt& prompt);

// ---------------------------------------------------------------------------
// Structured completion
// ---------------------------------------------------------------------------

/// Raw text completion. Implementations throw ProviderError subclasses.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    /// `rendered` is render_prompt(prompt) plus any repair note.
    virtual std::string complete(const StructuredPrompt& prompt, const std::string& rendered) = 0;
};

using SchemaValidator = std::function<std::optional<std::string>(const json&)>;

/// Output schema registry keyed by schema tag. The default registry holds one
/// schema per prompt role, tagged with the role name.
class SchemaRegistry {
public:
    static SchemaRegistry defaults();

    void add(std::string tag, SchemaValidator validator);
    bool contains(const std::string& tag) const;
    /// Error message, or nullopt when valid.
    std::optional<std::string> validate(const std::string& tag, const json& value) const;

private:
    std::map<std::string, SchemaValidator> validators_;
};

struct StructuredReply {
    json value;
    int retries = 0;
    std::string raw;
};

/// Extracts the outermost JSON object or array from model text (tolerates
/// code fences and surrounding prose). Throws json::parse_error.
json parse_json_reply(const std::string& text);

class LlmClient {
public:
    LlmClient(CompletionBackend& backend, ProviderConfig config, Diagnostics& diagnostics,
              SchemaRegistry schemas = SchemaRegistry::defaults());

    /// Dispatches the prompt and validates the reply against `schema_tag`.
    /// Retryable backend errors and schema violations share the
    /// max_retries budget; retries after a schema violation carry a repair
    /// note with the validation error.
    StructuredReply complete_structured(const StructuredPrompt& prompt, const std::string& schema_tag);
    StructuredReply complete_structured(const StructuredPrompt& prompt) {
        return complete_structured(prompt, to_string(prompt.role));
    }

    std::map<std::string, std::size_t> call_counts() const;
    std::size_t call_count(PromptRole role) const;
    void reset_call_counts();
    const ProviderConfig& config() const { return config_; }

private:
    CompletionBackend& backend_;
    ProviderConfig config_;
    Diagnostics& diagnostics_;
    SchemaRegistry schemas_;
    mutable std::mutex counts_mutex_;
    std::map<std::string, std::size_t> counts_;
};

// ---------------------------------------------------------------------------
// Embeddings and reranking
// ---------------------------------------------------------------------------

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    /// Checks preconditions (non-empty list, no blank text) and the shape
    /// contract of the backend's reply.
    std::vector<Embedding> embed(const std::vector<std::string>& texts);

protected:
    virtual std::vector<Embedding> do_embed(const std::vector<std::string>& texts) = 0;
};

/// Memoizes another provider by exact text. Thread-safe.
class CachingEmbedder : public EmbeddingProvider {
public:
    explicit CachingEmbedder(EmbeddingProvider& inner) : inner_(inner) {}
    std::size_t cache_size() const;

protected:
    std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

private:
    EmbeddingProvider& inner_;
    mutable std::mutex mutex_;
    std::map<std::string, Embedding> cache_;
};

/// Cross-scoring of (query, document) pairs; higher is more relevant.
class RerankProvider {
public:
    virtual ~RerankProvider() = default;
    virtual std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) = 0;
};

// ---------------------------------------------------------------------------
// Scholarly graph
// ---------------------------------------------------------------------------

enum class LinkDirection { References, Citations };

class ScholarlyProvider {
public:
    virtual ~ScholarlyProvider() = default;

    /// At most `limit` records, deduplicated by paper id, blank titles dropped.
    std::vector<PaperRecord> search_papers(const std::string& query, std::size_t limit);
    std::vector<PaperRecord> get_linked_papers(const std::string& paper_id, LinkDirection direction,
                                               std::size_t limit);
    /// Absent when no confident match exists. Never fabricates a record.
    std::optional<PaperRecord> resolve_citation(const std::string& free_text);

protected:
    virtual std::vector<PaperRecord> do_search(const std::string& query, std::size_t limit) = 0;
    virtual std::vector<PaperRecord> do_linked(const std::string& paper_id, LinkDirection direction,
                                               std::size_t limit) = 0;
    /// Candidate records for a free-text reference; matching happens in
    /// resolve_citation via best_citation_match.
    virtual std::vector<PaperRecord> do_resolve_candidates(const std::string& free_text) = 0;
};

/// Picks the confident match for a free-text reference among candidates:
/// exact normalized title, else a unique first-author surname + year match,
/// else a unique title containing a long enough fragment.
std::optional<PaperRecord> best_citation_match(const std::string& free_text,
                                               const std::vector<PaperRecord>& candidates);

/// Parsed author-year reference ("Ge et al., 2023" -> {"ge", 2023}).
struct AuthorYear {
    std::string surname;  // lowercase
    int year = 0;
};
std::optional<AuthorYear> parse_author_year(std::string_view text);

// ---------------------------------------------------------------------------
// Document text
// ---------------------------------------------------------------------------

class TextExtractor {
public:
    virtual ~TextExtractor() = default;
    /// Plain text with page boundaries as newlines; empty string when the
    /// document cannot be read (a warning is recorded).
    std::string extract_text(std::span<const std::uint8_t> bytes, Diagnostics& diagnostics);

protected:
    virtual std::string do_extract(std::span<const std::uint8_t> bytes) = 0;
};

// ---------------------------------------------------------------------------
// Rate limiting
// ---------------------------------------------------------------------------

/// Token bucket; acquire() blocks until a token is available.
class RateLimiter {
public:
    RateLimiter(double tokens_per_second, double burst = 1.0);
    void acquire();
    bool try_acquire();

private:
    void refill();

    std::mutex mutex_;
    double rate_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
};

// ---------------------------------------------------------------------------

/// Everything a pipeline stage may call out to.
struct Providers {
    LlmClient& llm;
    EmbeddingProvider& embedder;
    RerankProvider& reranker;
    ScholarlyProvider& scholarly;
    Diagnostics& diagnostics;
};

}  // namespace tracewrite
