#include "support.hpp"

#include <doctest.h>

using namespace tw_test;

namespace {

const std::vector<std::string> kAggregationTitles = {
    "Adapter layers",       "Adapter prompt fusion", "Adapter routing",   "Adapter pruning",   "Prompt ensembles",
    "Prompt task transfer", "Task vectors",          "Quantized experts", "Sparse updates",    "Distillation schedules"};

struct TableFixture {
    PaperStore store;
    std::vector<PaperRecord> papers;
};

TableFixture make_fixture(const std::vector<std::string>& titles) {
    TableFixture f;
    std::vector<PaperRecord> recs;
    for (std::size_t i = 0; i < titles.size(); ++i) {
        recs.push_back(paper("t" + std::to_string(i + 1), titles[i],
                             titles[i] + " improves efficiency on standard benchmarks. It trains on public data."));
    }
    auto keys = upsert(f.store, recs, provenance::kSurveyLevel);
    for (const auto& k : keys) f.papers.push_back(f.store.at(k));
    return f;
}

TableRequest request_for(const TableFixture& f) {
    return {"s2", "Tuning methods", "Ways to tune.", "Body text of the subsection.", f.papers};
}

std::string cite(const PaperRecord& p) { return "\\cite{" + p.bibkey + "}"; }

}  // namespace

TEST_CASE("table kind threshold") {
    CHECK(decide_table_kind(9) == TableKind::Aspect);
    CHECK(decide_table_kind(10) == TableKind::Aggregation);
    CHECK(decide_table_kind(1) == TableKind::Aspect);
    CHECK_THROWS_AS(decide_table_kind(0), PreconditionError);
}

TEST_CASE("category pruning") {
    std::map<std::string, std::vector<std::string>> members{{"A", {"p1", "p2"}}, {"B", {"p3"}}, {"Others", {"p4", "p5"}}, {"C", {"p1", "p4", "p5"}}};
    CHECK(prune_categories({"C", "B", "A", "Others", "D"}, members) == std::vector<std::string>{"C", "A"});
}

TEST_CASE("aggregation table over ten papers") {
    MockEnv env;
    auto f = make_fixture(kAggregationTitles);
    auto index = build_index(f.store, env.embedder);
    auto t = build_table(request_for(f), index, env.providers);
    CHECK(t.kind == TableKind::Aggregation);
    CHECK(t.core_aspect == "methodological approach");
    CHECK(t.columns == std::vector<std::string>{"Paper", "Adapter-based", "Prompt-based", "Task-based"});
    const std::vector<std::vector<bool>> marks = {{true, false, false}, {true, true, false}, {true, false, false},
                                                  {true, false, false}, {false, true, false}, {false, true, true},
                                                  {false, false, true}};
    REQUIRE(t.rows.size() == marks.size());
    for (std::size_t i = 0; i < marks.size(); ++i) {
        CAPTURE(i);
        CHECK(t.rows[i][0] == cite(f.papers[i]));
        for (std::size_t c = 0; c < 3; ++c) CHECK(t.rows[i][c + 1] == (marks[i][c] ? kMarked : ""));
    }
    CHECK(t.cited.size() == 7);
    CHECK_NOTHROW(t.validate(f.store));
    CHECK(GeneratedTable::from_json(t.to_json()) == t);
}

TEST_CASE("aggregation falls back to an aspect table over nine papers") {
    MockEnv env;
    auto f = make_fixture(kAggregationTitles);
    auto index = build_index(f.store, env.embedder);
    const char* narrow = R"({"categories": ["Alpha-based", "Beta-based", "Others"]})";
    env.backend.script(PromptRole::TableCategories, {MockReply::with_text(narrow), MockReply::with_text(narrow)});
    auto t = build_aggregation_table(request_for(f), index, env.providers);
    CHECK(t.kind == TableKind::Aspect);
    CHECK(t.rows.size() == 9);
    CHECK(env.llm.call_count(PromptRole::TableCategories) == 2);
    CHECK(env.diag.count("tables") == 3);
    CHECK_NOTHROW(t.validate(f.store));
}

TEST_CASE("aggregation retries the proposal once") {
    MockEnv env;
    auto f = make_fixture(kAggregationTitles);
    auto index = build_index(f.store, env.embedder);
    env.backend.script(PromptRole::TableCategories, {MockReply::with_text(R"({"categories": ["Alpha-based", "Others"]})")});
    auto t = build_aggregation_table(request_for(f), index, env.providers);
    CHECK(t.kind == TableKind::Aggregation);
    CHECK(t.columns.size() == 4);
}

TEST_CASE("aspect table: absent papers are not reported") {
    MockEnv env;
    auto f = make_fixture({"Adapter layers", "Prompt ensembles", "Task vectors", "Sparse updates"});
    std::set<std::string> indexed;
    for (std::size_t i = 0; i < 3; ++i) indexed.insert(f.papers[i].bibkey);
    auto index = build_index(f.store, env.embedder, {}, indexed);
    auto t = build_table(request_for(f), index, env.providers);
    CHECK(t.kind == TableKind::Aspect);
    CHECK(t.columns.size() >= 4);
    CHECK(t.columns.size() <= 6);
    CHECK(t.columns[0] == "Paper");
    REQUIRE(t.rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(t.rows[i][0] == cite(f.papers[i]));
        for (std::size_t c = 1; c < t.columns.size(); ++c) {
            if (i == 3) CHECK(t.rows[i][c] == kNotReported);
            else CHECK(t.rows[i][c] != kNotReported);
        }
    }
    CHECK_NOTHROW(t.validate(f.store));
}

TEST_CASE("aspect table with too few aspects after a retry fails") {
    MockEnv env;
    auto f = make_fixture({"Adapter layers", "Prompt ensembles"});
    auto index = build_index(f.store, env.embedder);
    const char* two = R"({"aspects": ["Core idea", "core idea", "Data"]})";
    env.backend.script(PromptRole::TableAspects, {MockReply::with_text(two), MockReply::with_text(two)});
    CHECK_THROWS_AS(build_aspect_table(request_for(f), index, env.providers), SchemaViolation);
}

TEST_CASE("failed cell summaries degrade to not reported") {
    MockEnv env(7, 0);
    auto f = make_fixture({"Adapter layers"});
    auto index = build_index(f.store, env.embedder);
    env.backend.script(PromptRole::TableCellSummary, {MockReply::unreachable()});
    auto t = build_aspect_table(request_for(f), index, env.providers);
    CHECK(t.rows[0][1] == kNotReported);
    CHECK(t.rows[0][2] != kNotReported);
    CHECK(env.diag.count("tables") == 1);
}

TEST_CASE("table validation") {
    PaperStore store;
    upsert(store, {paper("p", "Adapter layers")}, provenance::kSurveyLevel);
    auto key = store.records.begin()->first;
    GeneratedTable t{TableKind::Aspect, "s1", "c", "", {"Paper", "A", "B", "C"}, {{"\\cite{" + key + "}", "x", "y", "z"}}, {key}};
    CHECK_NOTHROW(t.validate(store));
    auto ragged = t;
    ragged.rows[0].pop_back();
    CHECK_THROWS(ragged.validate(store));
    auto narrow = t;
    narrow.columns = {"Paper", "A"};
    for (auto& r : narrow.rows) r.resize(2);
    CHECK_THROWS(narrow.validate(store));
    auto ghost = t;
    ghost.rows[0][0] = "\\cite{ghost}";
    ghost.cited = {"ghost"};
    CHECK_THROWS_AS(ghost.validate(store), UnknownBibkey);
    auto mismatch = t;
    mismatch.cited.clear();
    CHECK_THROWS(mismatch.validate(store));
}
