#pragma once

#include "tracewrite/controller.hpp"
#include "tracewrite/mock_providers.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace tw_test {

using namespace tracewrite;

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(TRACEWRITE_TEST_FIXTURES) / name;
}

inline std::filesystem::path corpus_path() { return std::filesystem::path(TRACEWRITE_DATA_DIR) / "fixtures" / "corpus.json"; }

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const std::filesystem::path& p) { return json::parse(read_text(p)); }

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("tracewrite_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

/// splitmix64 stream for property tests.
struct Gen {
    std::uint64_t state;
    explicit Gen(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() { return splitmix64(state++); }
    int range(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
    double unit() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }
    bool chance(double p) { return unit() < p; }
    std::string word() {
        static const char* words[] = {"adapter", "prompt", "rank", "sparse", "quantized", "routing", "memory",
                                      "transfer", "layer", "token", "bias", "scale", "budget", "expert"};
        return words[next() % (sizeof(words) / sizeof(words[0]))];
    }
    std::string text(int min_words, int max_words) {
        std::string out;
        int n = range(min_words, max_words);
        for (int i = 0; i < n; ++i) out += (i ? " " : "") + word();
        return out;
    }
};

inline std::vector<std::string> vertex_names(int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("v" + std::to_string(i));
    return v;
}

/// Random DAG: edges only from lower to higher position of a shuffled order.
inline DependencyGraph random_dag(Gen& g, int n, double density) {
    DependencyGraph graph;
    graph.vertices = vertex_names(n);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[g.next() % static_cast<std::uint64_t>(i + 1)]);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (g.chance(density))
                graph.add_edge(graph.vertices[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])],
                               graph.vertices[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])]);
        }
    }
    return graph;
}

inline DependencyGraph random_digraph(Gen& g, int n, double density) {
    DependencyGraph graph;
    graph.vertices = vertex_names(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && g.chance(density))
                graph.add_edge(graph.vertices[static_cast<std::size_t>(i)], graph.vertices[static_cast<std::size_t>(j)]);
        }
    }
    return graph;
}

inline PaperRecord paper(const std::string& id, const std::string& title, const std::string& abstract = "An abstract.",
                         std::optional<int> year = 2022, std::vector<std::string> authors = {"Ada Lovelace"}) {
    PaperRecord r;
    r.paper_id = id;
    r.title = title;
    r.abstract = abstract;
    r.year = year;
    r.authors = std::move(authors);
    return r;
}

/// Seeded mock backends over the fixture corpus.
struct MockEnv {
    Diagnostics diag;
    MockCompletionBackend backend;
    LlmClient llm;
    HashingEmbedder base_embedder;
    CachingEmbedder embedder;
    OverlapReranker reranker;
    std::unique_ptr<FixtureScholarlyProvider> scholarly;
    Providers providers;

    explicit MockEnv(std::uint64_t seed = 7, int max_retries = 2)
        : backend(seed),
          llm(backend, llm_config(max_retries), diag),
          base_embedder(seed),
          embedder(base_embedder),
          scholarly(FixtureScholarlyProvider::from_file(corpus_path())),
          providers{llm, embedder, reranker, *scholarly, diag} {}

    static ProviderConfig llm_config(int max_retries) {
        ProviderConfig c;
        c.max_retries = max_retries;
        c.backoff_ms = 0;
        return c;
    }
};

inline const char* kTopic = "Parameter-efficient fine-tuning of large language models";
inline const char* kDescription =
    "Methods that adapt large pretrained language models by training a small number of parameters, including "
    "adapters, prompt tuning and low-rank adaptation.";

inline RunConfig mock_config(const std::filesystem::path& out, std::uint64_t seed = 7) {
    RunConfig c;
    c.spec = {kTopic, kDescription};
    c.out_dir = out;
    c.mock = true;
    c.seed = seed;
    c.fixture_corpus = corpus_path();
    c.reference_year = 2025;
    c.llm.backoff_ms = 0;
    return c;
}

/// Every regular file under `root`, relative path -> bytes.
inline std::map<std::string, std::string> tree(const std::filesystem::path& root, const std::set<std::string>& skip = {}) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        auto rel = std::filesystem::relative(e.path(), root).string();
        if (skip.count(rel)) continue;
        out[rel] = read_text(e.path());
    }
    return out;
}

}  // namespace tw_test
