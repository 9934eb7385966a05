#include "tracewrite/config.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

namespace tracewrite {

namespace {

void check_live(const ProviderConfig& c, const std::string& name) {
    if (c.endpoint.empty()) throw ConfigError(name + " provider needs an endpoint in live mode");
    if (!c.credential.empty()) return;
    if (c.credential_env.empty()) throw ConfigError(name + " provider needs credential_env in live mode");
    const char* v = std::getenv(c.credential_env.c_str());
    if (!v || !*v) throw ConfigError("missing credential: environment variable " + c.credential_env + " is not set");
}

}  // namespace

void RunConfig::validate() const {
    try {
        spec.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    retrieval.validate();
    for (const auto* p : {&llm, &embedding, &rerank, &scholarly}) p->validate();
    if (target_words < 100) throw ConfigError("target length must be at least 100 words");
    if (n_candidates == 0 || n_candidates > 10) throw ConfigError("candidate count must lie in [1, 10]");
    if (parallelism == 0) throw ConfigError("parallelism must be at least 1");
    if (rag.top_n == 0 || rag.dense_k == 0) throw ConfigError("RAG sizes must be positive");
    if (chunking.chunk_size == 0 || chunking.overlap >= chunking.chunk_size)
        throw ConfigError("chunk overlap must be smaller than the chunk size");
    if (k_list.empty()) throw ConfigError("k-list must not be empty");
    for (int k : k_list) {
        if (k < 1) throw ConfigError("recency windows must be at least 1 year");
    }
    if (reference_year < 0) throw ConfigError("reference year must be positive");
    if (mock) {
        if (fixture_corpus.empty()) throw ConfigError("mock mode needs a fixture corpus");
        if (!std::filesystem::exists(fixture_corpus))
            throw ConfigError("fixture corpus not found: " + fixture_corpus.string());
    } else {
        check_live(llm, "llm");
        check_live(embedding, "embedding");
        check_live(rerank, "rerank");
        // The scholarly API works without a key at a lower rate.
        if (scholarly.endpoint.empty()) throw ConfigError("scholarly provider needs an endpoint in live mode");
    }
}

json RunConfig::to_json() const {
    json j{{"schema_version", 1},
           {"topic", spec.topic},
           {"description", spec.description},
           {"target_words", target_words},
           {"mock", mock},
           {"seed", seed},
           {"n_candidates", n_candidates},
           {"parallelism", parallelism},
           {"retrieval", retrieval.to_json()},
           {"rag", {{"dense_k", rag.dense_k}, {"top_n", rag.top_n}}},
           {"chunking", {{"chunk_size", chunking.chunk_size}, {"overlap", chunking.overlap}}},
           {"providers",
            {{"llm", llm.to_json()},
             {"embedding", embedding.to_json()},
             {"rerank", rerank.to_json()},
             {"scholarly", scholarly.to_json()}}},
           {"fixture_corpus", fixture_corpus.string()},
           {"k_list", k_list},
           {"reference_year", effective_reference_year()},
           {"final_refine", final_refine},
           {"tables", tables},
           {"judge", judge},
           {"fetch_full_text", fetch_full_text}};
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    try {
        RunConfig c;
        c.spec.topic = j.value("topic", "");
        c.spec.description = j.value("description", "");
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
        c.target_words = j.value("target_words", c.target_words);
        c.mock = j.value("mock", c.mock);
        c.seed = j.value("seed", c.seed);
        c.n_candidates = j.value("n_candidates", c.n_candidates);
        c.parallelism = j.value("parallelism", c.parallelism);
        if (j.contains("retrieval")) c.retrieval = RetrievalConfig::from_json(j["retrieval"]);
        if (j.contains("rag")) {
            c.rag.dense_k = j["rag"].value("dense_k", c.rag.dense_k);
            c.rag.top_n = j["rag"].value("top_n", c.rag.top_n);
        }
        if (j.contains("chunking")) {
            c.chunking.chunk_size = j["chunking"].value("chunk_size", c.chunking.chunk_size);
            c.chunking.overlap = j["chunking"].value("overlap", c.chunking.overlap);
        }
        if (j.contains("providers")) {
            const auto& p = j["providers"];
            if (p.contains("llm")) c.llm = ProviderConfig::from_json(p["llm"]);
            if (p.contains("embedding")) c.embedding = ProviderConfig::from_json(p["embedding"]);
            if (p.contains("rerank")) c.rerank = ProviderConfig::from_json(p["rerank"]);
            if (p.contains("scholarly")) c.scholarly = ProviderConfig::from_json(p["scholarly"]);
        }
        c.fixture_corpus = j.value("fixture_corpus", std::string());
        c.k_list = j.value("k_list", c.k_list);
        c.reference_year = j.value("reference_year", c.reference_year);
        c.final_refine = j.value("final_refine", c.final_refine);
        c.tables = j.value("tables", c.tables);
        c.judge = j.value("judge", c.judge);
        c.fetch_full_text = j.value("fetch_full_text", c.fetch_full_text);
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::size_t RunConfig::word_budget(std::size_t subsections) const {
    if (subsections == 0) return target_words;
    return std::max<std::size_t>(120, target_words / subsections);
}

int RunConfig::effective_reference_year() const {
    if (reference_year > 0) return reference_year;
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    return tm.tm_year + 1900;
}

}  // namespace tracewrite
