#include "support.hpp"
#include "tracewrite/runtime.hpp"

#include <doctest.h>

#include <regex>

using namespace tw_test;

namespace {

struct Run {
    std::unique_ptr<ProviderSet> set;
    RunResult result;
};

Run run_pipeline(const RunConfig& config, std::optional<RunState> resume = std::nullopt) {
    Run r;
    r.set = ProviderSet::create(config);
    RunLog log(config.out_dir / "run.jsonl", resume.has_value());
    Pipeline pipeline(config, r.set->providers(), log);
    r.result = pipeline.run(std::move(resume));
    return r;
}

const std::set<std::string> kLogOnly{"run.jsonl"};

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST_CASE("run config round trip and validation") {
    TempDir dir("cfg");
    auto c = mock_config(dir.path);
    CHECK_NOTHROW(c.validate());
    auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.spec.topic == kTopic);
    c.fetch_full_text = true;
    CHECK(RunConfig::from_json(c.to_json()).fetch_full_text);

    auto bad = c;
    bad.n_candidates = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.parallelism = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.k_list = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.mock = false;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.spec.topic = "";
    CHECK_THROWS(bad.validate());
}

TEST_CASE("run config file loading") {
    TempDir dir("cfgfile");
    std::ofstream(dir.path / "c.json") << R"({"topic": "Graph pruning", "description": "Pruning.", "mock": true, "seed": 3, "k_list": [2, 4]})";
    auto c = RunConfig::load(dir.path / "c.json");
    CHECK(c.spec.topic == "Graph pruning");
    CHECK(c.seed == 3);
    CHECK(c.k_list == std::vector<int>{2, 4});
    std::ofstream(dir.path / "bad.json") << "{ not json";
    CHECK_THROWS_AS(RunConfig::load(dir.path / "bad.json"), ConfigError);
    CHECK_THROWS_AS(RunConfig::load(dir.path / "missing.json"), ConfigError);
}

TEST_CASE("word budget and reference year") {
    RunConfig c;
    c.target_words = 6000;
    CHECK(c.word_budget(12) == 500);
    c.reference_year = 2024;
    CHECK(c.effective_reference_year() == 2024);
    c.reference_year = 0;
    CHECK(c.effective_reference_year() >= 2025);
}

// ---------------------------------------------------------------------------
// Scheduling and merging
// ---------------------------------------------------------------------------

TEST_CASE("next stage picks the smallest unfinished index") {
    RunState s;
    s.outline = outline_from_json(read_json(fixture("outline_single.json")));
    s.plan = plan_from_json(read_json(fixture("plan_staged.json")));
    auto first = next_stage(s);
    REQUIRE(first.has_value());
    CHECK(first->stage == 2);
    CHECK(first->ids == std::vector<std::string>{"s1"});
    s.completed.insert("s1");
    auto second = next_stage(s);
    CHECK(second->ids == std::vector<std::string>{"s2", "s3"});
    s.completed.insert({"s2", "s3"});
    CHECK_FALSE(next_stage(s).has_value());
}

TEST_CASE("merging writer stores renames colliding bibkeys") {
    PaperStore main, writer;
    upsert(main, {paper("p1", "Adapter tuning", "a", 2020, {"Ann Smith"})}, provenance::kSurveyLevel);
    upsert(writer, {paper("p2", "Adapter layers", "b", 2020, {"Bob Smith"})}, provenance::kTraced);
    upsert(writer, {paper("p1", "Adapter tuning", "a", 2020, {"Ann Smith"})}, provenance::subsection("s1"));
    auto merge = merge_store(main, writer);
    CHECK(main.size() == 2);
    CHECK(merge.renamed.at("smith2020adapter") == "smith2020adapter-b");
    CHECK(main.at("smith2020adapter-b").paper_id == "p2");
    CHECK(main.has_tag("smith2020adapter-b", provenance::kTraced));
    CHECK(main.bibkey_for_paper_id("p1").size() > 0);
    CHECK_NOTHROW(main.check_invariants());

    SubsectionResult r;
    r.text = "See \\cite{smith2020adapter}.";
    r.traced = {{"smith2020adapter", "t", "a", 0, "[1]"}};
    r.passages = {{"x", "smith2020adapter", "smith2020adapter#c0", 1.0}};
    apply_renames(r, merge.renamed);
    CHECK(r.text == "See \\cite{smith2020adapter-b}.");
    CHECK(r.traced[0].bibkey == "smith2020adapter-b");
    CHECK(r.passages[0].bibkey == "smith2020adapter-b");
}

TEST_CASE("final refinement reverts rewrites that change citations") {
    MockEnv env;
    auto outline = outline_from_json(read_json(fixture("outline_single.json")));
    std::map<std::string, std::string> texts{{"s1", "One \\cite{a}."}, {"s2", "Two \\cite{b}."}, {"s3", "Three \\cite{c}."}};
    env.backend.script(PromptRole::GlobalDiagnosis,
                       {MockReply::with_text(R"({"flagged": [{"subsection_id": "s1", "issue": "x"}, {"subsection_id": "s3", "issue": "y"}, {"subsection_id": "s9"}]})")});
    env.backend.script(PromptRole::Refinement, {MockReply::with_text(R"({"text": "One rewritten \\cite{a}."})"),
                                                MockReply::with_text(R"({"text": "Three without citations."})")});
    auto report = final_refine(outline, texts, {}, env.llm, env.diag);
    CHECK(report.flagged.size() == 2);
    CHECK(report.rewritten == std::vector<std::string>{"s1"});
    CHECK(report.reverted == std::vector<std::string>{"s3"});
    CHECK(texts.at("s1") == "One rewritten \\cite{a}.");
    CHECK(texts.at("s2") == "Two \\cite{b}.");
    CHECK(texts.at("s3") == "Three \\cite{c}.");
    CHECK(env.llm.call_count(PromptRole::Refinement) == 2);
}

TEST_CASE("final refinement survives a provider failure") {
    MockEnv env(7, 0);
    auto outline = outline_from_json(read_json(fixture("outline_single.json")));
    std::map<std::string, std::string> texts{{"s1", "a"}, {"s2", "b"}, {"s3", "c"}};
    auto before = texts;
    env.backend.script(PromptRole::GlobalDiagnosis, {MockReply::unreachable()});
    auto report = final_refine(outline, texts, {}, env.llm, env.diag);
    CHECK(report.flagged.empty());
    CHECK(texts == before);
    texts.erase("s2");
    CHECK_THROWS_AS(final_refine(outline, texts, {}, env.llm, env.diag), PreconditionError);
}

TEST_CASE("table papers come from the enriched context minus reviews") {
    PaperStore store;
    auto review = paper("r", "A survey of adapters");
    review.is_review = true;
    auto keys = upsert(store, {paper("a", "Adapters"), review, paper("t", "Traced one")}, provenance::kSurveyLevel);
    json sidecar{{"passages", {{{"bibkey", keys[0]}}, {{"bibkey", keys[1]}}, {{"bibkey", keys[0]}}}},
                 {"traced", {{{"bibkey", keys[2]}}, {{"bibkey", "ghost"}}}}};
    auto papers = table_papers(sidecar, store);
    REQUIRE(papers.size() == 2);
    CHECK(papers[0].paper_id == "a");
    CHECK(papers[1].paper_id == "t");
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

TEST_CASE("markdown and latex rendering") {
    PaperStore store;
    auto keys = upsert(store, {paper("a", "Adapter layers", "x", 2019, {"Neil Houlsby"}), paper("b", "Attention", "y", 2017, {"Ashish Vaswani"})},
                       provenance::kSurveyLevel);
    SurveyDocument doc;
    doc.title = "Survey";
    doc.sections = {{"Methods", {{"s1", "Adapters", "Adapters work \\cite{" + keys[0] + "," + keys[1] + "}."}}}};
    doc.traced_from[keys[1]] = {keys[0]};
    CHECK_NOTHROW(doc.validate(store));
    auto md = render_markdown(doc, store);
    CHECK(md.find("# Survey") == 0);
    CHECK(md.find("## Methods") != std::string::npos);
    CHECK(md.find("### Adapters") != std::string::npos);
    CHECK(md.find("[@" + keys[0] + "][@" + keys[1] + "]*") != std::string::npos);
    CHECK(md.find("- [" + keys[1] + "]") != std::string::npos);
    CHECK(md.find("Traced from " + keys[0]) != std::string::npos);
    auto tex = render_latex(doc, store);
    CHECK(tex.find("\\cite{" + keys[1] + "}$^{*}$") != std::string::npos);
    CHECK(tex.find("\\bibliography{references}") != std::string::npos);
    CHECK(reference_text(store.at(keys[0])).find("Neil Houlsby (2019). Adapter layers.") == 0);

    doc.sections[0].subsections[0].text += " \\cite{ghost}";
    CHECK_THROWS(doc.validate(store));
}

TEST_CASE("run log numbers events") {
    TempDir dir("log");
    {
        RunLog log(dir.path / "run.jsonl");
        log.event("a");
        log.event("b", {{"x", 1}});
        CHECK(log.events().size() == 2);
    }
    auto lines = split(trim(read_text(dir.path / "run.jsonl")), '\n');
    REQUIRE(lines.size() == 2);
    CHECK(json::parse(lines[0])["seq"] == 0);
    CHECK(json::parse(lines[1])["event"] == "b");
}

// ---------------------------------------------------------------------------
// End to end on mocks
// ---------------------------------------------------------------------------

TEST_CASE("mock run: artifacts and document invariants") {
    TempDir dir("e2e");
    auto config = mock_config(dir.path / "out");
    auto run = run_pipeline(config);
    const auto& state = run.result.state;
    const auto& out = config.out_dir;
    for (const char* f : {"survey.md", "survey.tex", "references.bib", "papers.csv", "memory.json", "retrieval.json",
                          "outline.json", "plan.json", "plan_history.json", "metrics.json", "run.jsonl"})
        CHECK_MESSAGE(std::filesystem::exists(out / f), f);

    auto md = read_text(out / "survey.md");
    for (const auto* s : state.outline.subsections()) CHECK(md.find("### " + s->title) != std::string::npos);
    CHECK(state.completed.size() == state.outline.subsection_count());

    auto bib = read_text(out / "references.bib");
    auto cited = run.result.document.cited();
    CHECK_FALSE(cited.empty());
    for (const auto& k : cited) {
        CHECK(state.store.contains(k));
        CHECK(bib.find("@misc{" + k + ",") != std::string::npos);
        CHECK(md.find("- [" + k + "]") != std::string::npos);
    }
    for (const auto& [k, from] : run.result.document.traced_from) {
        CHECK_FALSE(from.empty());
        CHECK(state.store.has_tag(k, provenance::kTraced));
        CHECK(md.find("[@" + k + "]*") != std::string::npos);
    }
    CHECK_FALSE(run.result.document.traced_from.empty());

    auto plan = plan_from_json(read_json(out / "plan.json"));
    CHECK_NOTHROW(check_plan_invariants(plan, false));
    for (const auto& [id, t] : run.result.tables) CHECK_NOTHROW(t.validate(state.store));

    Diagnostics diag;
    auto stats = analyze_document(parse_document(md), diag);
    CHECK(stats.cited_works.size() == cited.size());
    auto metrics = read_json(out / "metrics.json");
    CHECK(metrics["NR"] == cited.size());
}

TEST_CASE("mock runs are deterministic across repeats and parallelism") {
    TempDir dir("det");
    auto a = mock_config(dir.path / "a");
    auto b = mock_config(dir.path / "b");
    auto c = mock_config(dir.path / "c");
    c.parallelism = 1;
    run_pipeline(a);
    run_pipeline(b);
    run_pipeline(c);
    auto ta = tree(a.out_dir);
    CHECK(ta == tree(b.out_dir));
    CHECK(tree(a.out_dir, kLogOnly) == tree(c.out_dir, kLogOnly));
}

TEST_CASE("a different seed changes the output") {
    TempDir dir("seed");
    auto a = mock_config(dir.path / "a", 7);
    auto b = mock_config(dir.path / "b", 8);
    run_pipeline(a);
    run_pipeline(b);
    CHECK(read_text(a.out_dir / "survey.md") != read_text(b.out_dir / "survey.md"));
}

TEST_CASE("resume after a crash reproduces the uninterrupted run") {
    TempDir dir("resume");
    auto full = mock_config(dir.path / "full");
    run_pipeline(full);

    auto crashed = mock_config(dir.path / "crash");
    crashed.crash_after_stage = 0;
    CHECK_THROWS_AS(run_pipeline(crashed), StageError);
    CHECK_FALSE(std::filesystem::exists(crashed.out_dir / "survey.md"));
    auto checkpoint = Pipeline::load_checkpoint(crashed.out_dir);
    REQUIRE(checkpoint.has_value());
    CHECK(checkpoint->current_stage == 0);

    crashed.crash_after_stage.reset();
    run_pipeline(crashed, checkpoint);
    CHECK(tree(full.out_dir, kLogOnly) == tree(crashed.out_dir, kLogOnly));
}

TEST_CASE("planning alone never writes subsections") {
    TempDir dir("plan");
    auto config = mock_config(dir.path / "out");
    auto set = ProviderSet::create(config);
    RunLog log;
    Pipeline pipeline(config, set->providers(), log);
    auto state = pipeline.initialize();
    CHECK(set->providers().llm.call_count(PromptRole::SubsectionWrite) == 0);
    CHECK(state.completed.empty());
    CHECK_FALSE(state.plan.entries.empty());
    CHECK(Pipeline::load_checkpoint(config.out_dir).has_value());
}

TEST_CASE("an unreachable scholarly backend stops the run") {
    TempDir dir("down");
    auto config = mock_config(dir.path / "out");
    auto set = ProviderSet::create(config);
    dynamic_cast<FixtureScholarlyProvider&>(set->providers().scholarly).set_unreachable(true);
    RunLog log;
    Pipeline pipeline(config, set->providers(), log);
    try {
        pipeline.run();
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.provider_failure());
    }
}
