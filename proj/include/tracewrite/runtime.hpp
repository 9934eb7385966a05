#pragma once

#include "tracewrite/config.hpp"
#include "tracewrite/mock_providers.hpp"

#include <memory>

namespace tracewrite {

/// Owns the backends behind a Providers view: seeded mocks over the fixture
/// corpus in mock mode, HTTP clients otherwise.
class ProviderSet {
public:
    static std::unique_ptr<ProviderSet> create(const RunConfig& config);

    Providers& providers() { return *providers_; }
    Diagnostics& diagnostics() { return diagnostics_; }
    /// Non-null in mock mode.
    MockCompletionBackend* mock_backend() { return mock_backend_; }

private:
    ProviderSet() = default;

    Diagnostics diagnostics_;
    std::unique_ptr<CompletionBackend> backend_;
    MockCompletionBackend* mock_backend_ = nullptr;
    std::unique_ptr<LlmClient> llm_;
    std::unique_ptr<EmbeddingProvider> base_embedder_;
    std::unique_ptr<CachingEmbedder> embedder_;
    std::unique_ptr<RerankProvider> reranker_;
    std::unique_ptr<TextExtractor> extractor_;
    std::unique_ptr<ScholarlyProvider> scholarly_;
    std::unique_ptr<Providers> providers_;
};

}  // namespace tracewrite
