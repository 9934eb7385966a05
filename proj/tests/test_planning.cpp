#include "oracles.hpp"

#include <doctest.h>

using namespace tw_test;

namespace {

DependencyGraph graph_of(std::vector<std::string> vertices, std::vector<Edge> edges) {
    DependencyGraph g;
    g.vertices = std::move(vertices);
    for (const auto& [a, b] : edges) g.add_edge(a, b);
    return g;
}

Outline two_section_outline() {
    return outline_from_json(json{{"sections",
                                   {{{"section_title", "Foundations"},
                                     {"section_description", "Basics."},
                                     {"subsections",
                                      {{{"subsection_title", "Adapters"}, {"subsection_description", "Adapter layers."}},
                                       {{"subsection_title", "Prompts"}, {"subsection_description", "Soft prompts."}}}}},
                                    {{"section_title", "Practice"},
                                     {"section_description", "Use."},
                                     {"subsections",
                                      {{{"subsection_title", "Benchmarks"}, {"subsection_description", "Evaluation."}}}}}}}});
}

}  // namespace

TEST_CASE("single-section outline fixture parses") {
    auto outline = outline_from_json(read_json(fixture("outline_single.json")));
    REQUIRE(outline.sections.size() == 1);
    CHECK(outline.sections[0].title == "Fine-Tuning Methodologies for Enhanced Translation");
    CHECK(outline.subsection_ids() == std::vector<std::string>{"s1", "s2", "s3"});
    CHECK(outline.find("s2")->title == "Utilization of Adapter Modules");
    CHECK(outline.find_by_title("data augmentation strategies")->id == "s3");
    CHECK_NOTHROW(outline.validate());
    CHECK(outline.next_id() == "s4");
}

TEST_CASE("outline json round trip keeps ids") {
    auto outline = two_section_outline();
    outline.sections[1].subsections[0].id = "s9";
    auto back = outline_from_json(outline_to_json(outline));
    CHECK(back == outline);
    CHECK(outline_to_json(outline)["sections"][0]["subsections"][0]["subsection_id"] == "s1");
}

TEST_CASE("outline validation") {
    auto outline = two_section_outline();
    outline.sections[1].subsections[0].id = "s1";
    CHECK_THROWS_AS(outline.validate(), PreconditionError);
    outline = two_section_outline();
    outline.sections[0].subsections.clear();
    CHECK_THROWS_AS(outline.validate(), PreconditionError);
}

TEST_CASE("plan fixture: staged entries with internal and external dependencies") {
    auto plan = plan_from_json(read_json(fixture("plan_staged.json")));
    REQUIRE(plan.entries.size() == 3);
    auto* adaptive = plan.find("s1");
    auto* adapter = plan.find("s2");
    auto* augment = plan.find("s3");
    REQUIRE((adaptive && adapter && augment));
    CHECK(adaptive->stage == 2);
    CHECK(adapter->stage == 3);
    CHECK(augment->stage == 3);
    CHECK(adaptive->depends_on.empty());
    CHECK(adaptive->external_depends_on == std::vector<std::string>{"Challenges in Data Availability and Quality"});
    CHECK(adapter->depends_on == std::vector<std::string>{"s1"});
    CHECK(augment->depends_on == std::vector<std::string>{"s1"});
    CHECK(augment->external_depends_on == std::vector<std::string>{"Challenges in Data Availability and Quality"});
    CHECK(adapter->retrieval);
    CHECK(adapter->table);
    auto g = plan_graph(plan);
    CHECK(g.has_edge("s1", "s2"));
    CHECK(g.has_edge("s1", "s3"));
    CHECK(g.edges.size() == 2);
    CHECK_NOTHROW(check_plan_invariants(plan, false));
    CHECK(plan.max_stage() == 3);
    CHECK(plan.by_stage()[3] == std::vector<std::string>{"s2", "s3"});
}

TEST_CASE("plan json round trip and schema") {
    auto plan = plan_from_json(read_json(fixture("plan_staged.json")));
    auto j = plan_to_json(plan);
    CHECK(j["schema_version"] == 1);
    for (const auto& e : j["plan"]) {
        for (const char* field : {"section_title", "subsection_title", "subsection_description", "index",
                                  "trigger_additional_search", "generate_table", "depends_on", "subsection_id"})
            CHECK(e.contains(field));
        CHECK(e["index"].is_number_integer());
        CHECK(e["depends_on"].is_array());
    }
    CHECK(j["plan"][1]["depends_on"] == json::array({"Adaptive Fine-Tuning Techniques"}));
    CHECK(plan_from_json(j) == plan);
}

TEST_CASE("plan invariant violations are reported") {
    auto plan = plan_from_json(read_json(fixture("plan_staged.json")));
    auto broken = plan;
    broken.find("s2")->stage = 2;
    CHECK_THROWS(check_plan_invariants(broken, false));
    broken = plan;
    broken.entries.push_back(broken.entries[0]);
    CHECK_THROWS(check_plan_invariants(broken, false));
    broken = plan;
    broken.find("s2")->depends_on = {"s7"};
    CHECK_THROWS(check_plan_invariants(broken, false));
    CHECK_NOTHROW(check_plan_invariants(plan, true));
    broken = plan;
    broken.find("s1")->external_depends_on.clear();
    CHECK_NOTHROW(check_plan_invariants(broken, false));
    CHECK_THROWS(check_plan_invariants(broken, true));
}

TEST_CASE("stage assignment on a small example") {
    auto g = graph_of({"A", "B", "C"}, {{"A", "B"}, {"A", "C"}, {"B", "C"}});
    auto stages = assign_stages(g);
    CHECK(stages == std::map<std::string, int>{{"A", 0}, {"B", 1}, {"C", 2}});
    auto floored = assign_stages(g, {{"A", 2}});
    CHECK(floored == std::map<std::string, int>{{"A", 2}, {"B", 3}, {"C", 4}});
    auto b_floor = assign_stages(g, {{"B", 5}});
    CHECK(b_floor.at("C") == 6);
    CHECK(b_floor.at("A") == 0);
    CHECK_THROWS_AS(assign_stages(graph_of({"A", "B"}, {{"A", "B"}, {"B", "A"}})), PreconditionError);
}

TEST_CASE("stage assignment agrees with brute force on random DAGs") {
    Gen g(2024);
    for (int round = 0; round < 100; ++round) {
        auto dag = random_dag(g, g.range(1, 9), g.unit() * 0.6);
        auto stages = assign_stages(dag);
        CHECK(stages == brute_force_stages(dag));
        for (const auto& [a, b] : dag.edges) CHECK(stages.at(a) < stages.at(b));
    }
}

TEST_CASE("graph edges: no self loops, no duplicates, known vertices") {
    auto g = graph_of({"A", "B"}, {});
    CHECK(g.add_edge("A", "B"));
    CHECK_FALSE(g.add_edge("A", "B"));
    CHECK_FALSE(g.add_edge("A", "A"));
    CHECK_THROWS_AS(g.add_edge("A", "Z"), PreconditionError);
    CHECK(g.predecessors("B") == std::vector<std::string>{"A"});
    CHECK(g.successors("A") == std::vector<std::string>{"B"});
}

TEST_CASE("cycle breaking examples") {
    auto two = break_cycles(graph_of({"A", "B"}, {{"A", "B"}, {"B", "A"}}));
    CHECK(two.removed == std::vector<Edge>{{"B", "A"}});
    auto tri = break_cycles(graph_of({"A", "B", "C", "D"}, {{"A", "B"}, {"B", "C"}, {"C", "A"}, {"C", "D"}}));
    CHECK(tri.removed == std::vector<Edge>{{"C", "A"}});
    CHECK(tri.graph.has_edge("C", "D"));
    auto dag = graph_of({"A", "B"}, {{"A", "B"}});
    CHECK(break_cycles(dag).graph == dag);
    CHECK(break_cycles(dag).removed.empty());
}

TEST_CASE("cycle breaking properties on random digraphs") {
    Gen g(77);
    for (int round = 0; round < 100; ++round) {
        auto graph = random_digraph(g, g.range(1, 9), g.unit() * 0.4);
        auto result = break_cycles(graph);
        CHECK(acyclic_oracle(result.graph));
        CHECK(is_acyclic(result.graph) == true);
        CHECK(is_acyclic(graph) == acyclic_oracle(graph));
        for (const auto& e : graph.edges) {
            bool on_cycle = reaches(graph, e.second, e.first);
            bool kept = result.graph.has_edge(e.first, e.second);
            if (!on_cycle) CHECK(kept);
            if (!kept) {
                CHECK(on_cycle);
                CHECK(std::find(result.removed.begin(), result.removed.end(), e) != result.removed.end());
            }
        }
        CHECK(result.graph.edges.size() + result.removed.size() == graph.edges.size());
        auto again = break_cycles(result.graph);
        CHECK(again.removed.empty());
        CHECK(again.graph == result.graph);
    }
}

TEST_CASE("dependency graph from the model drops unknown and self references") {
    MockEnv env;
    auto outline = two_section_outline();
    env.backend.script(PromptRole::DepGraph,
                       {MockReply::with_text(R"({"dependencies": [
                           {"subsection_title": "Prompts", "depends_on": ["Adapters", "Prompts", "Ghost"]},
                           {"subsection_title": "Benchmarks", "depends_on": ["prompts"]}]})")});
    auto g = build_dependency_graph(outline, env.llm, env.diag);
    CHECK(g.vertices == std::vector<std::string>{"s1", "s2", "s3"});
    CHECK(g.edges == std::vector<Edge>{{"s1", "s2"}, {"s2", "s3"}});
    CHECK(env.diag.count() == 2);
}

TEST_CASE("raw plan is repeated once for missing entries") {
    MockEnv env;
    auto outline = two_section_outline();
    env.backend.script(PromptRole::RawPlan,
                       {MockReply::with_text(R"({"entries": [{"subsection_title": "Adapters", "trigger_additional_search": true, "generate_table": false}]})"),
                        MockReply::with_text(R"({"entries": [{"subsection_title": "Adapters", "trigger_additional_search": true, "generate_table": false}]})")});
    CHECK_THROWS_AS(generate_raw_plan(outline, env.llm, env.diag), SchemaViolation);

    env.backend.script(PromptRole::RawPlan,
                       {MockReply::with_text(R"({"entries": [{"subsection_title": "Adapters", "trigger_additional_search": true, "generate_table": false}]})")});
    auto raw = generate_raw_plan(outline, env.llm, env.diag);
    REQUIRE(raw.size() == 3);
    CHECK(raw[0].subsection_id == "s1");
}

TEST_CASE("finalize_plan copies outline text and stages") {
    auto outline = two_section_outline();
    auto g = graph_of(outline.subsection_ids(), {{"s1", "s3"}});
    std::vector<RawPlanEntry> raw{{"s1", true, false}, {"s2", false, false}, {"s3", false, true}};
    auto plan = finalize_plan(outline, raw, assign_stages(g), g);
    REQUIRE(plan.entries.size() == 3);
    CHECK(plan.entries[2].section_title == "Practice");
    CHECK(plan.entries[2].stage == 1);
    CHECK(plan.entries[2].depends_on == std::vector<std::string>{"s1"});
    CHECK(plan.entries[2].table);
    CHECK(plan.entries[0].retrieval);
    CHECK_NOTHROW(check_plan_invariants(plan));
}

TEST_CASE("full planning on the mock backends") {
    MockEnv env;
    PaperStore store;
    survey_level_retrieve({kTopic, kDescription}, RetrievalConfig{}, env.providers, store);
    auto result = plan_survey(store, {kTopic, kDescription}, env.providers);
    CHECK_NOTHROW(result.outline.validate());
    CHECK(result.plan.entries.size() == result.outline.subsection_count());
    CHECK_NOTHROW(check_plan_invariants(result.plan));
    CHECK(is_acyclic(result.dag.graph));
    CHECK(assign_stages(result.dag.graph) == brute_force_stages(result.dag.graph));
    CHECK(result.context.size() <= kPlanningContextCap);
    CHECK(plan_from_json(plan_to_json(result.plan)) == result.plan);
}

TEST_CASE("planning context respects the cap by dropping abstracts") {
    MockEnv env;
    PaperStore store;
    std::vector<PaperRecord> recs;
    for (int i = 0; i < 20; ++i) {
        auto p = paper("p" + std::to_string(i), "Paper number " + std::to_string(i), std::string(500, 'a' + i % 26));
        p.relevance_score = i;
        recs.push_back(p);
    }
    upsert(store, recs, provenance::kSurveyLevel);
    auto ctx = build_planning_context(store, env.llm, env.diag, 3000);
    CHECK(ctx.size() <= 3000);
    CHECK(ctx.dropped_abstracts > 0);
    CHECK(ctx.abstracts.size() + ctx.dropped_abstracts == 20);
    for (const auto& [title, abs] : ctx.abstracts) CHECK(title.find("number 0") == std::string::npos);
}
