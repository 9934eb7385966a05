#include "tracewrite/runtime.hpp"

#include "tracewrite/http_providers.hpp"

namespace tracewrite {

std::unique_ptr<ProviderSet> ProviderSet::create(const RunConfig& config) {
    config.validate();
    std::unique_ptr<ProviderSet> set(new ProviderSet());
    auto llm_config = config.llm;
    if (config.mock) {
        auto seed = config.llm.mock_seed.value_or(config.seed);
        auto backend = std::make_unique<MockCompletionBackend>(seed);
        set->mock_backend_ = backend.get();
        set->backend_ = std::move(backend);
        set->base_embedder_ = std::make_unique<HashingEmbedder>(config.embedding.mock_seed.value_or(config.seed));
        set->reranker_ = std::make_unique<OverlapReranker>();
        set->scholarly_ = FixtureScholarlyProvider::from_file(config.fixture_corpus);
    } else {
        set->backend_ = std::make_unique<HttpCompletionBackend>(config.llm);
        set->base_embedder_ = std::make_unique<HttpEmbeddingProvider>(config.embedding);
        set->reranker_ = std::make_unique<HttpRerankProvider>(config.rerank);
        if (config.fetch_full_text) set->extractor_ = std::make_unique<PdfTextExtractor>();
        set->scholarly_ = std::make_unique<SemanticScholarProvider>(config.scholarly, set->extractor_.get(), &set->diagnostics_);
    }
    set->llm_ = std::make_unique<LlmClient>(*set->backend_, llm_config, set->diagnostics_);
    set->embedder_ = std::make_unique<CachingEmbedder>(*set->base_embedder_);
    set->providers_ = std::make_unique<Providers>(
        Providers{*set->llm_, *set->embedder_, *set->reranker_, *set->scholarly_, set->diagnostics_});
    return set;
}

}  // namespace tracewrite
