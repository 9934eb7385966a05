#include "support.hpp"

#include <doctest.h>

using namespace tw_test;

namespace {

Outline six_outline() {
    Outline o;
    o.sections = {{"Methods", "Families.", {{"s1", "Adapters", "Adapter layers."}, {"s2", "Prompts", "Soft prompts."},
                                            {"s3", "Prefixes", "Prefix tuning."}}},
                  {"Practice", "Use.", {{"s4", "Benchmarks", "Evaluation."}, {"s5", "Costs", "Compute."},
                                        {"s6", "Outlook", "Future work."}}}};
    return o;
}

std::vector<std::string> titles(const Section& s) {
    std::vector<std::string> out;
    for (const auto& sub : s.subsections) out.push_back(sub.title);
    return out;
}

std::vector<std::string> ids(const Section& s) {
    std::vector<std::string> out;
    for (const auto& sub : s.subsections) out.push_back(sub.id);
    return out;
}

const char* kOneOfEach = R"({"actions": [
  {"kind": "reorder", "targets": ["s6"], "position": 0},
  {"kind": "add", "targets": [], "title": "Open problems", "description": "Unsolved issues.", "section_title": "Practice", "position": 0},
  {"kind": "rename", "targets": ["s4"], "title": "Evaluation benchmarks"},
  {"kind": "delete", "targets": ["s5"]},
  {"kind": "merge", "targets": ["s2", "s3"], "title": "Prompt and prefix tuning"}
]})";

StagedPlan plan_for(const Outline& o, Providers& providers) { return build_plan(o, providers).plan; }

}  // namespace

TEST_CASE("revision kinds round trip") {
    for (auto k : {RevisionKind::Merge, RevisionKind::Delete, RevisionKind::Rename, RevisionKind::Add, RevisionKind::Reorder})
        CHECK(revision_kind_from_string(to_string(k)) == k);
    RevisionAction a{RevisionKind::Add, {}, "T", "D", "Sec", 2};
    CHECK(RevisionAction::from_json(a.to_json()) == a);
}

TEST_CASE("revision validation") {
    auto o = six_outline();
    std::set<std::string> written{"s1"};
    CHECK(revision_problem({RevisionKind::Rename, {"s1"}, "New", "", "", {}}, o, written).find("written") != std::string::npos);
    CHECK_FALSE(revision_problem({RevisionKind::Delete, {"s9"}, "", "", "", {}}, o, written).empty());
    CHECK_FALSE(revision_problem({RevisionKind::Merge, {"s2"}, "", "", "", {}}, o, written).empty());
    CHECK_FALSE(revision_problem({RevisionKind::Merge, {"s2", "s2"}, "", "", "", {}}, o, written).empty());
    CHECK_FALSE(revision_problem({RevisionKind::Rename, {"s2"}, "", "", "", {}}, o, written).empty());
    CHECK_FALSE(revision_problem({RevisionKind::Add, {}, "T", "", "", {}}, o, written).empty());
    CHECK_FALSE(revision_problem({RevisionKind::Reorder, {"s2"}, "", "", "", {}}, o, written).empty());
    CHECK_FALSE(revision_problem({RevisionKind::Reorder, {"s2"}, "", "", "", -1}, o, written).empty());
    CHECK(revision_problem({RevisionKind::Reorder, {"s2"}, "", "", "", 0}, o, written).empty());
    CHECK(revision_problem({RevisionKind::Merge, {"s2", "s3"}, "", "", "", {}}, o, written).empty());
}

TEST_CASE("proposals drop invalid actions and those touching written subsections") {
    MockEnv env;
    env.backend.script(PromptRole::Revision, {MockReply::with_text(R"({"actions": [
        {"kind": "delete", "targets": ["s1"]},
        {"kind": "rename", "targets": ["s9"], "title": "X"},
        {"kind": "rename", "targets": ["s2"], "title": "Soft prompt tuning"}]})")});
    auto actions = propose_revisions(six_outline(), {}, {"s1"}, env.llm, env.diag);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].targets == std::vector<std::string>{"s2"});
    CHECK(env.diag.count("replanner") == 2);
}

TEST_CASE("a malformed revision reply yields no actions") {
    MockEnv env(7, 1);
    env.backend.script(PromptRole::Revision, {MockReply::with_text("nope"), MockReply::with_text("{\"actions\": 3}")});
    CHECK(propose_revisions(six_outline(), {}, {"s1"}, env.llm, env.diag).empty());
    CHECK(env.diag.count("replanner") == 1);
    auto all = std::set<std::string>{"s1", "s2", "s3", "s4", "s5", "s6"};
    CHECK_THROWS_AS(propose_revisions(six_outline(), {}, all, env.llm, env.diag), PreconditionError);
}

TEST_CASE("one action of each kind, applied in kind order") {
    MockEnv env;
    env.backend.script(PromptRole::Revision, {MockReply::with_text(kOneOfEach)});
    auto actions = propose_revisions(six_outline(), {}, {"s1"}, env.llm, env.diag);
    REQUIRE(actions.size() == 5);
    auto out = apply_revisions(six_outline(), actions, env.diag);
    CHECK(out.applied.size() == 5);
    CHECK(out.dropped.empty());
    REQUIRE(out.outline.sections.size() == 2);
    CHECK(titles(out.outline.sections[0]) == std::vector<std::string>{"Adapters", "Prompt and prefix tuning"});
    CHECK(ids(out.outline.sections[0]) == std::vector<std::string>{"s1", "s2"});
    CHECK(out.outline.find("s2")->description == "Soft prompts. Prefix tuning.");
    CHECK(titles(out.outline.sections[1]) == std::vector<std::string>{"Outlook", "Open problems", "Evaluation benchmarks"});
    CHECK(ids(out.outline.sections[1]) == std::vector<std::string>{"s6", "s7", "s4"});
    CHECK(out.outline.find("s7")->description == "Unsolved issues.");
    CHECK(*out.outline.find("s1") == *six_outline().find("s1"));
    CHECK_NOTHROW(out.outline.validate());
}

TEST_CASE("added subsections never reuse retired ids") {
    Diagnostics diag;
    std::vector<RevisionAction> add{{RevisionKind::Add, {}, "Fresh", "New topic.", "Methods", {}}};
    CHECK(apply_revisions(six_outline(), add, diag).outline.find_by_title("Fresh")->id == "s7");
    CHECK(apply_revisions(six_outline(), add, diag, {"s7", "s8"}).outline.find_by_title("Fresh")->id == "s9");
}

TEST_CASE("conflicting actions are dropped") {
    Diagnostics diag;
    std::vector<RevisionAction> actions{{RevisionKind::Merge, {"s2", "s3"}, "", "", "", {}},
                                        {RevisionKind::Rename, {"s3"}, "Gone", "", "", {}},
                                        {RevisionKind::Rename, {"s4"}, "Adapters", "", "", {}},
                                        {RevisionKind::Add, {}, "Outlook", "dup", "Practice", {}}};
    auto out = apply_revisions(six_outline(), actions, diag);
    CHECK(out.applied.size() == 1);
    CHECK(out.dropped.size() == 3);
    CHECK(diag.count("replanner") == 3);
    CHECK(out.outline.subsection_count() == 5);
}

TEST_CASE("empty sections disappear and the outline never empties") {
    Diagnostics diag;
    auto out = apply_revisions(six_outline(), {{RevisionKind::Delete, {"s4", "s5", "s6"}, "", "", "", {}}}, diag);
    CHECK(out.outline.sections.size() == 1);
    Outline tiny;
    tiny.sections = {{"Only", "", {{"s1", "One", "d"}}}};
    auto kept = apply_revisions(tiny, {{RevisionKind::Delete, {"s1"}, "", "", "", {}}}, diag);
    CHECK(kept.outline == tiny);
    CHECK(kept.dropped.size() == 1);
}

TEST_CASE("replan keeps written entries and pushes the rest past the current stage") {
    MockEnv env;
    auto outline = six_outline();
    auto previous = plan_for(outline, env.providers);
    std::set<std::string> written;
    int current = 0;
    for (const auto& e : previous.entries) {
        if (e.stage == 0) written.insert(e.subsection_id);
    }
    REQUIRE_FALSE(written.empty());
    env.backend.script(PromptRole::Revision, {MockReply::with_text(kOneOfEach)});
    auto actions = propose_revisions(outline, {}, written, env.llm, env.diag);
    auto revised = apply_revisions(outline, actions, env.diag);
    auto build = replan(revised.outline, written, previous, current, env.providers);
    CHECK(build.plan.entries.size() == revised.outline.subsection_count());
    for (const auto& e : build.plan.entries) {
        if (written.count(e.subsection_id)) {
            CHECK(e == *previous.find(e.subsection_id));
        } else {
            CHECK(e.stage >= current + 1);
        }
    }
    CHECK_NOTHROW(check_plan_invariants(build.plan, false));
    CHECK(is_acyclic(build.dag.graph));
}

TEST_CASE("replan ignores edges into written subsections") {
    MockEnv env;
    auto outline = six_outline();
    auto previous = plan_for(outline, env.providers);
    for (auto& e : previous.entries) {
        e.stage = e.subsection_id == "s1" ? 0 : 1;
        e.depends_on.clear();
    }
    env.backend.script(PromptRole::DepGraph, {MockReply::with_text(R"({"dependencies": [
        {"subsection_title": "Adapters", "depends_on": ["Prompts"]},
        {"subsection_title": "Prompts", "depends_on": ["Adapters"]},
        {"subsection_title": "Prefixes", "depends_on": ["Prompts"]}]})")});
    auto build = replan(outline, {"s1"}, previous, 2, env.providers);
    CHECK(*build.plan.find("s1") == *previous.find("s1"));
    CHECK(build.plan.find("s2")->stage == 3);
    CHECK(build.plan.find("s3")->stage == 4);
    CHECK(build.plan.find("s3")->depends_on == std::vector<std::string>{"s2"});
    CHECK_THROWS_AS(replan(outline, {"s9"}, previous, 2, env.providers), PreconditionError);
}
