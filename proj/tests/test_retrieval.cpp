#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace tw_test;

namespace {

struct FilterFixture {
    std::string query;
    std::vector<PaperRecord> candidates;
    std::map<std::string, Embedding> table;
    std::map<std::string, double> cosine;  // recomputed here, not read from the file
};

FilterFixture load_filter_fixture() {
    auto j = read_json(fixture("filter_embeddings.json"));
    FilterFixture f;
    f.query = j["query"]["text"];
    auto q = j["query"]["embedding"].get<std::vector<double>>();
    f.table[f.query] = Embedding{q};
    for (const auto& c : j["candidates"]) {
        auto p = paper(c["paper_id"], c["title"], c["abstract"]);
        auto v = c["embedding"].get<std::vector<double>>();
        f.table[p.abstract] = Embedding{v};
        double dot = 0, nq = 0, nv = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            dot += q[i] * v[i];
            nq += q[i] * q[i];
            nv += v[i] * v[i];
        }
        f.cosine[p.paper_id] = dot / std::sqrt(nq * nv);
        CHECK(f.cosine[p.paper_id] == doctest::Approx(c["cosine"].get<double>()));
        f.candidates.push_back(p);
    }
    return f;
}

std::vector<std::string> ids(const std::vector<Candidate>& cs) {
    std::vector<std::string> out;
    for (const auto& c : cs) out.push_back(c.paper.paper_id);
    return out;
}

std::vector<std::string> ids(const std::vector<PaperRecord>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(p.paper_id);
    return out;
}

PaperRecord scored(const std::string& id, double score, int year = 2022) {
    auto p = paper(id, "Title " + id, "abs", year);
    p.relevance_score = score;
    return p;
}

}  // namespace

TEST_CASE("semantic filter over the fixture embeddings") {
    auto f = load_filter_fixture();
    FixtureEmbedder emb(f.table);
    Diagnostics diag;
    auto kept = semantic_filter(f.candidates, f.query, 0.3, emb, diag);
    std::vector<std::string> expected;
    for (const auto& p : f.candidates) {
        if (f.cosine[p.paper_id] >= 0.3) expected.push_back(p.paper_id);
    }
    CHECK(ids(kept) == expected);
    CHECK(ids(kept) == std::vector<std::string>{"f-high", "f-edge", "f-same"});
    for (const auto& c : kept) {
        REQUIRE(c.cosine.has_value());
        CHECK(*c.cosine == doctest::Approx(f.cosine[c.paper.paper_id]));
    }
    CHECK(diag.count() == 0);
}

TEST_CASE("raising the threshold never adds papers") {
    auto f = load_filter_fixture();
    FixtureEmbedder emb(f.table);
    Diagnostics diag;
    std::vector<std::string> prev = ids(semantic_filter(f.candidates, f.query, -1.0, emb, diag));
    CHECK(prev.size() == f.candidates.size());
    for (double t = -0.9; t <= 1.0001; t += 0.05) {
        auto cur = ids(semantic_filter(f.candidates, f.query, t, emb, diag));
        for (const auto& id : cur) CHECK(std::find(prev.begin(), prev.end(), id) != prev.end());
        prev = cur;
    }
}

TEST_CASE("abstractless candidates bypass the filter with a warning") {
    auto f = load_filter_fixture();
    f.candidates.push_back(paper("f-none", "No abstract", ""));
    FixtureEmbedder emb(f.table);
    Diagnostics diag;
    auto kept = semantic_filter(f.candidates, f.query, 0.99, emb, diag);
    CHECK(ids(kept) == std::vector<std::string>{"f-same", "f-none"});
    CHECK_FALSE(kept.back().cosine.has_value());
    CHECK(diag.count("retrieval") == 1);
}

TEST_CASE("citation expansion unions links and excludes seeds") {
    json corpus{{"papers",
                 {{{"paper_id", "A"}, {"title", "A"}, {"references", {"B", "C"}}},
                  {{"paper_id", "X"}, {"title", "X"}, {"references", {"C", "A"}}, {"citations", {"D"}}},
                  {{"paper_id", "B"}, {"title", "B"}},
                  {{"paper_id", "C"}, {"title", "C"}},
                  {{"paper_id", "D"}, {"title", "D"}}}}};
    FixtureScholarlyProvider sch(corpus);
    Diagnostics diag;
    auto out = expand_citations({paper("A", "A"), paper("X", "X")}, sch, 50, diag);
    auto got = ids(out);
    CHECK(std::set<std::string>(got.begin(), got.end()) == std::set<std::string>{"B", "C", "D"});
    CHECK(got.size() == 3);

    sch.fail_links_for({"A"});
    auto partial = ids(expand_citations({paper("A", "A"), paper("X", "X")}, sch, 50, diag));
    CHECK(std::set<std::string>(partial.begin(), partial.end()) == std::set<std::string>{"C", "D"});
    CHECK(diag.count("retrieval") == 1);
}

TEST_CASE("relevance scores are clamped into range") {
    Diagnostics diag;
    MockCompletionBackend backend(1);
    backend.script(PromptRole::RelevanceScore,
                   {MockReply::with_text(R"({"scores": [{"id": "a", "score": 120}, {"id": "b", "score": -5}, {"id": "c", "score": 55}]})")});
    ProviderConfig cfg;
    cfg.backoff_ms = 0;
    LlmClient llm(backend, cfg, diag);
    auto out = score_relevance({paper("a", "A"), paper("b", "B"), paper("c", "C")}, {kTopic, kDescription}, llm, diag);
    CHECK(out[0].relevance_score == 100.0);
    CHECK(out[1].relevance_score == 0.0);
    CHECK(out[2].relevance_score == 55.0);
    CHECK(diag.count("retrieval") == 2);
}

TEST_CASE("failed scoring batch scores zero") {
    Diagnostics diag;
    MockCompletionBackend backend(1);
    backend.set_unreachable(true);
    ProviderConfig cfg;
    cfg.backoff_ms = 0;
    cfg.max_retries = 0;
    LlmClient llm(backend, cfg, diag);
    auto out = score_relevance({paper("a", "A"), paper("b", "B")}, {kTopic, kDescription}, llm, diag, 1);
    CHECK(out[0].relevance_score == 0.0);
    CHECK(out[1].relevance_score == 0.0);
    CHECK(backend.calls() == 2);
}

TEST_CASE("select_final examples") {
    RetrievalConfig cfg;
    CHECK(ids(select_final({scored("a", 90), scored("b", 71), scored("c", 69)}, cfg)) ==
          std::vector<std::string>{"a", "b"});

    std::vector<PaperRecord> low;
    for (int i = 0; i < 8; ++i) low.push_back(scored("l" + std::to_string(i), 9.0 * i));
    CHECK(ids(select_final(low, cfg)) == std::vector<std::string>{"l7", "l6", "l5", "l4", "l3"});

    std::vector<PaperRecord> many;
    for (int i = 0; i < 40; ++i) many.push_back(scored("m" + std::to_string(i), 70.0 + (i % 20)));
    auto capped = select_final(many, cfg);
    CHECK(capped.size() == 30);
    for (std::size_t i = 1; i < capped.size(); ++i) CHECK(*capped[i - 1].relevance_score >= *capped[i].relevance_score);

    CHECK(ids(select_final({scored("old", 80, 2019), scored("new", 80, 2023)}, cfg)) ==
          std::vector<std::string>{"new", "old"});
}

TEST_CASE("select_final property: threshold or fallback, sorted, capped") {
    Gen g(17);
    RetrievalConfig cfg;
    for (int round = 0; round < 200; ++round) {
        std::vector<PaperRecord> papers;
        int n = g.range(1, 60);
        for (int i = 0; i < n; ++i) papers.push_back(scored("p" + std::to_string(i), g.range(0, 100), g.range(2015, 2025)));
        auto out = select_final(papers, cfg);
        std::size_t passing = 0;
        for (const auto& p : papers) passing += *p.relevance_score >= 70.0;
        if (passing > 0) {
            CHECK(out.size() == std::min<std::size_t>(passing, 30));
            for (const auto& p : out) CHECK(*p.relevance_score >= 70.0);
        } else {
            CHECK(out.size() == std::min<std::size_t>(papers.size(), 5));
        }
        for (std::size_t i = 1; i < out.size(); ++i) CHECK(*out[i - 1].relevance_score >= *out[i].relevance_score);
    }
}

TEST_CASE("keyword generation retries a degenerate reply once") {
    Diagnostics diag;
    MockCompletionBackend backend(1);
    backend.script(PromptRole::KeywordGen, {MockReply::with_text(R"({"keywords": ["only"]})")});
    ProviderConfig cfg;
    cfg.backoff_ms = 0;
    LlmClient llm(backend, cfg, diag);
    auto kws = generate_keywords({kTopic, kDescription}, llm);
    CHECK(kws.size() >= 3);
    CHECK(kws.size() <= 10);

    backend.script(PromptRole::KeywordGen, {MockReply::with_text(R"({"keywords": []})"), MockReply::with_text(R"({"keywords": ["  "]})")});
    CHECK_THROWS(generate_keywords({kTopic, kDescription}, llm));
}

TEST_CASE("survey-level retrieval over the fixture corpus") {
    MockEnv env;
    PaperStore store;
    RetrievalConfig cfg;
    auto report = survey_level_retrieve({kTopic, kDescription}, cfg, env.providers, store);
    CHECK(report.keywords.size() >= 3);
    CHECK(report.searched > 0);
    CHECK(report.filtered <= report.searched);
    CHECK_FALSE(report.bibkeys.empty());
    CHECK(report.bibkeys.size() <= cfg.per_query_cap);
    for (const auto& k : report.bibkeys) {
        CHECK(store.has_tag(k, provenance::kSurveyLevel));
        CHECK(store.at(k).relevance_score.has_value());
    }
    CHECK_NOTHROW(store.check_invariants());

    PaperStore again;
    MockEnv env2;
    CHECK(survey_level_retrieve({kTopic, kDescription}, cfg, env2.providers, again).to_json() == report.to_json());
    CHECK(again == store);
}

TEST_CASE("retrieval surfaces an unreachable scholarly backend as a stage error") {
    MockEnv env;
    env.scholarly->set_unreachable(true);
    PaperStore store;
    try {
        survey_level_retrieve({kTopic, kDescription}, RetrievalConfig{}, env.providers, store);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.provider_failure());
    }
}

TEST_CASE("retrieval config validation") {
    RetrievalConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.similarity_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.relevance_threshold = 101;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    TopicSpec blank{"", "d"};
    CHECK_THROWS_AS(blank.validate(), PreconditionError);
}
