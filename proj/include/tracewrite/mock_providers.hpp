#pragma once

// Deterministic offline backends. Outputs are pure functions of (inputs, seed);
// the only mutable state is the optional script queue used by tests.

#include "tracewrite/providers.hpp"

#include <array>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

namespace tracewrite {

/// One scripted backend reaction.
struct MockReply {
    enum class Kind { Text, Unreachable, Timeout, RateLimited };
    Kind kind = Kind::Text;
    std::string text;

    static MockReply with_text(std::string t) { return {Kind::Text, std::move(t)}; }
    static MockReply unreachable() { return {Kind::Unreachable, {}}; }
    static MockReply timeout() { return {Kind::Timeout, {}}; }
};

struct MockLlmOptions {
    /// Refinement passes return their input unchanged.
    bool identity_refinement = false;
    /// Fixed judge scores (coverage, relevance, structure, synthesis, consistency).
    std::optional<std::array<double, 5>> judge_scores;
};

/// Rule-based stand-in for a language model. Each prompt role has a small
/// deterministic generator that reads the prompt slots.
class MockCompletionBackend : public CompletionBackend {
public:
    explicit MockCompletionBackend(std::uint64_t seed, MockLlmOptions options = {});

    std::string complete(const StructuredPrompt& prompt, const std::string& rendered) override;

    /// Queues replies consumed (front first) before the generator runs.
    void script(PromptRole role, std::vector<MockReply> replies);
    /// Replaces the generator for a role. Returning nullopt falls through to
    /// the built-in generator.
    using Handler = std::function<std::optional<std::string>(const StructuredPrompt&)>;
    void set_handler(PromptRole role, Handler handler);
    /// Makes every call throw BackendUnreachable.
    void set_unreachable(bool unreachable) { unreachable_ = unreachable; }

    std::size_t calls() const;
    std::uint64_t seed() const { return seed_; }
    MockLlmOptions& options() { return options_; }

    /// The built-in generator, without scripts or handlers.
    json generate(const StructuredPrompt& prompt) const;

private:
    std::uint64_t seed_;
    MockLlmOptions options_;
    mutable std::mutex mutex_;
    std::map<PromptRole, std::deque<MockReply>> scripts_;
    std::map<PromptRole, Handler> handlers_;
    std::size_t calls_ = 0;
    bool unreachable_ = false;
};

/// Feature-hashed bag of content tokens, L2-normalized. Texts sharing
/// vocabulary get high cosine similarity; the seed permutes the hashing.
class HashingEmbedder : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::uint64_t seed, std::size_t dimension = 384);

protected:
    std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

private:
    std::uint64_t seed_;
    std::size_t dimension_;
};

/// Returns fixed vectors for known texts and delegates everything else.
class FixtureEmbedder : public EmbeddingProvider {
public:
    explicit FixtureEmbedder(std::map<std::string, Embedding> table) : table_(std::move(table)) {}

protected:
    std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

private:
    std::map<std::string, Embedding> table_;
};

/// Content-token overlap: |q ∩ d| / sqrt(|q| |d|).
class OverlapReranker : public RerankProvider {
public:
    std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) override;
};

/// Scholarly backend over a JSON fixture corpus:
///   {"papers": [{"paper_id", "title", "abstract", "authors", "year", "url",
///                "publication_types", "full_text", "references", "citations"}]}
/// Search is a case- and punctuation-insensitive substring match over title
/// and abstract, in fixture order.
class FixtureScholarlyProvider : public ScholarlyProvider {
public:
    explicit FixtureScholarlyProvider(const json& corpus);
    static std::unique_ptr<FixtureScholarlyProvider> from_file(const std::filesystem::path& path);

    void set_unreachable(bool unreachable) { unreachable_ = unreachable; }
    /// Linked-paper lookups for these ids throw BackendUnreachable.
    void fail_links_for(std::set<std::string> ids) { failing_ids_ = std::move(ids); }
    std::size_t size() const { return papers_.size(); }
    const std::vector<PaperRecord>& papers() const { return papers_; }
    std::size_t request_count() const;

protected:
    std::vector<PaperRecord> do_search(const std::string& query, std::size_t limit) override;
    std::vector<PaperRecord> do_linked(const std::string& paper_id, LinkDirection direction, std::size_t limit) override;
    std::vector<PaperRecord> do_resolve_candidates(const std::string& free_text) override;

private:
    void count_request() const;
    const PaperRecord* find(const std::string& id) const;

    std::vector<PaperRecord> papers_;
    std::vector<std::string> search_text_;  // normalized title + abstract
    std::map<std::string, std::vector<std::string>> references_;
    std::map<std::string, std::vector<std::string>> citations_;
    bool unreachable_ = false;
    std::set<std::string> failing_ids_;
    mutable std::mutex mutex_;
    mutable std::size_t requests_ = 0;
};

PaperRecord paper_from_fixture_json(const json& j);

}  // namespace tracewrite
