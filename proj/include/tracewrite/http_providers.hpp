#pragma once

// Live backends over HTTP: OpenAI-compatible chat and embedding endpoints,
// a /rerank endpoint and a Semantic-Scholar-Graph-style scholarly API.

#include "tracewrite/providers.hpp"

#include <memory>

namespace tracewrite {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Minimal JSON-over-HTTP transport. Maps connection failures to
/// BackendUnreachable, timeouts to TimeoutError and 429 to RateLimited.
class HttpTransport {
public:
    explicit HttpTransport(const ProviderConfig& config);

    json post_json(const std::string& path, const json& body);
    json get_json(const std::string& path_and_query);

    const std::string& base_path() const { return base_path_; }

private:
    json finish(const std::string& what, int status, const std::string& body, bool transport_error, bool timed_out);

    ProviderConfig config_;
    std::string origin_;     // scheme://host[:port]
    std::string base_path_;  // path prefix, no trailing slash
    std::string credential_;
};

/// Credential from the config or, when empty, its environment variable.
std::string resolve_credential(const ProviderConfig& config);
std::string url_encode(std::string_view s);

class HttpCompletionBackend : public CompletionBackend {
public:
    explicit HttpCompletionBackend(const ProviderConfig& config);
    std::string complete(const StructuredPrompt& prompt, const std::string& rendered) override;

private:
    ProviderConfig config_;
    HttpTransport http_;
    std::unique_ptr<RateLimiter> limiter_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(const ProviderConfig& config);

protected:
    std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

private:
    ProviderConfig config_;
    HttpTransport http_;
};

class HttpRerankProvider : public RerankProvider {
public:
    explicit HttpRerankProvider(const ProviderConfig& config);
    std::vector<double> score(const std::string& query, const std::vector<std::string>& documents) override;

private:
    ProviderConfig config_;
    HttpTransport http_;
};

/// Body of a GET on an absolute URL, following redirects. Throws like
/// HttpTransport.
std::string http_get_bytes(const std::string& url, double timeout_seconds);

/// Scholarly graph client. Requests pass a token bucket (1/s unless
/// configured) and back off exponentially on 429 up to max_retries. With an
/// extractor, search results that carry an open-access PDF get its text as
/// full text; any failure leaves the abstract in place with a warning.
class SemanticScholarProvider : public ScholarlyProvider {
public:
    explicit SemanticScholarProvider(const ProviderConfig& config, TextExtractor* extractor = nullptr,
                                     Diagnostics* diagnostics = nullptr);

protected:
    std::vector<PaperRecord> do_search(const std::string& query, std::size_t limit) override;
    std::vector<PaperRecord> do_linked(const std::string& paper_id, LinkDirection direction, std::size_t limit) override;
    std::vector<PaperRecord> do_resolve_candidates(const std::string& free_text) override;

private:
    json get(const std::string& path_and_query);
    std::vector<PaperRecord> search(const std::string& query, std::size_t limit, bool with_text);
    void attach_full_text(PaperRecord& record, const json& item);

    ProviderConfig config_;
    HttpTransport http_;
    RateLimiter limiter_;
    TextExtractor* extractor_;
    Diagnostics* diagnostics_;
};

/// Parses one Graph-API paper object; nullopt without id or title.
std::optional<PaperRecord> paper_from_graph_json(const json& j);

/// Text from uncompressed or FlateDecode content streams: string operands of
/// Tj, TJ, ' and ". Text-positioning operators become spaces or newlines and
/// each page ends with a newline.
class PdfTextExtractor : public TextExtractor {
protected:
    std::string do_extract(std::span<const std::uint8_t> bytes) override;
};

}  // namespace tracewrite
