#pragma once

#include "tracewrite/corpus.hpp"
#include "tracewrite/providers.hpp"
#include "tracewrite/retrieval.hpp"
#include "tracewrite/writer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tracewrite {

/// Everything a run depends on. Serialized (without credentials and output
/// path) into the run log, so a logged config replays the same run.
struct RunConfig {
    TopicSpec spec;
    std::filesystem::path out_dir = "survey_out";
    std::size_t target_words = 6000;  // whole survey; split evenly into per-subsection budgets
    bool mock = false;
    std::uint64_t seed = 7;
    std::size_t n_candidates = 3;
    std::size_t parallelism = 4;
    RetrievalConfig retrieval;
    RagOptions rag;
    ChunkingOptions chunking;
    ProviderConfig llm;
    ProviderConfig embedding;
    ProviderConfig rerank;
    ProviderConfig scholarly;
    std::filesystem::path fixture_corpus;  // mock scholarly corpus
    std::vector<int> k_list{1, 3, 5, 7, 10};
    int reference_year = 0;  // 0: current calendar year
    bool final_refine = true;
    bool tables = true;
    bool judge = true;
    bool fetch_full_text = false;  // live mode: download and extract open-access PDFs
    std::optional<int> crash_after_stage;  // fault injection for resume tests

    /// Throws ConfigError. In live mode every provider needs an endpoint and
    /// a credential present in its environment variable.
    void validate() const;
    json to_json() const;
    static RunConfig from_json(const json& j);
    static RunConfig load(const std::filesystem::path& path);

    /// Per-subsection word budget for an outline of `subsections` entries.
    std::size_t word_budget(std::size_t subsections) const;
    int effective_reference_year() const;
};

}  // namespace tracewrite
