#pragma once

#include "tracewrite/corpus.hpp"
#include "tracewrite/providers.hpp"
#include "tracewrite/retrieval.hpp"

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace tracewrite {

// ---------------------------------------------------------------------------
// Outline
// ---------------------------------------------------------------------------

struct SubsectionSpec {
    std::string id;  // stable across renames
    std::string title;
    std::string description;

    bool operator==(const SubsectionSpec&) const = default;
};

struct Section {
    std::string title;
    std::string description;
    std::vector<SubsectionSpec> subsections;

    bool operator==(const Section&) const = default;
};

struct Outline {
    std::vector<Section> sections;

    std::vector<const SubsectionSpec*> subsections() const;
    std::vector<std::string> subsection_ids() const;
    const SubsectionSpec* find(const std::string& id) const;
    const SubsectionSpec* find_by_title(const std::string& title) const;  // case-insensitive
    /// Section holding the subsection, or nullptr.
    const Section* section_of(const std::string& id) const;
    std::size_t subsection_count() const;
    /// Throws PreconditionError naming the first broken invariant.
    void validate() const;
    /// Smallest "s<n>" used neither here nor in `reserved`.
    std::string next_id(const std::set<std::string>& reserved = {}) const;

    bool operator==(const Outline&) const = default;
};

/// Section objects with section_title, section_description, subsections
/// [{subsection_title, subsection_description}]; ids are carried in an
/// extra "subsection_id" field when present.
json outline_to_json(const Outline& outline);
/// Accepts {"sections": [...]}, a bare section array, or a single section
/// object. Subsections without ids are numbered s1, s2, ... in order.
Outline outline_from_json(const json& j);

// ---------------------------------------------------------------------------
// Planning context
// ---------------------------------------------------------------------------

struct ReviewOutline {
    std::string title;
    std::vector<std::string> headings;  // or the abstract, for abstract-only reviews
};

struct PlanningContext {
    std::vector<ReviewOutline> reviews;
    std::vector<std::pair<std::string, std::string>> abstracts;  // (title, abstract), non-review papers
    std::size_t dropped_abstracts = 0;

    std::size_t size() const;
    json to_json() const;
};

constexpr std::size_t kPlanningContextCap = 60000;

/// Reviews contribute an outline extracted from full text (or their
/// abstract); other papers contribute title and abstract. Abstracts with the
/// lowest relevance are dropped first to stay within `cap` characters.
PlanningContext build_planning_context(const PaperStore& papers, LlmClient& llm, Diagnostics& diagnostics,
                                       std::size_t cap = kPlanningContextCap);

Outline generate_outline(const PlanningContext& context, const TopicSpec& spec, LlmClient& llm);
/// LLM refinement followed by local enforcement: duplicate titles dropped,
/// missing descriptions filled, empty sections removed.
Outline refine_outline(const Outline& draft, const TopicSpec& spec, LlmClient& llm, Diagnostics& diagnostics);

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

struct PlanEntry {
    std::string subsection_id;
    std::string section_title;
    std::string title;
    std::string description;
    bool retrieval = false;  // trigger_additional_search
    bool table = false;      // generate_table
    int stage = 0;           // index
    std::vector<std::string> depends_on;          // subsection ids
    std::vector<std::string> external_depends_on; // titles that name no subsection in the plan

    bool operator==(const PlanEntry&) const = default;
};

struct StagedPlan {
    std::vector<PlanEntry> entries;  // outline order

    const PlanEntry* find(const std::string& id) const;
    PlanEntry* find(const std::string& id);
    int max_stage() const;
    std::map<int, std::vector<std::string>> by_stage() const;

    bool operator==(const StagedPlan&) const = default;
};

/// {"schema_version": 1, "plan": [...]}. Entries carry section_title,
/// subsection_title, subsection_description, index, depends_on,
/// trigger_additional_search, generate_table and subsection_id; depends_on
/// lists titles.
json plan_to_json(const StagedPlan& plan);
/// Accepts the wrapper or a bare entry array. Entries without
/// "subsection_id" are numbered s1, s2, ... in order. Unknown dependency
/// titles are kept as external dependencies.
StagedPlan plan_from_json(const json& j);

struct RawPlanEntry {
    std::string subsection_id;
    bool retrieval = false;
    bool table = false;
};

/// One entry per subsection. When the model omits entries the request is
/// repeated once; entries still missing raise SchemaViolation.
std::vector<RawPlanEntry> generate_raw_plan(const Outline& outline, LlmClient& llm, Diagnostics& diagnostics);

// ---------------------------------------------------------------------------
// Dependency graph
// ---------------------------------------------------------------------------

using Edge = std::pair<std::string, std::string>;  // prerequisite -> dependent

struct DependencyGraph {
    std::vector<std::string> vertices;  // outline order
    std::vector<Edge> edges;            // insertion order, unique, no self-edges

    /// Adds an edge unless it is a self-edge or a duplicate. Returns whether
    /// it was added. Throws PreconditionError for unknown vertices.
    bool add_edge(const std::string& from, const std::string& to);
    bool has_edge(const std::string& from, const std::string& to) const;
    std::vector<std::string> predecessors(const std::string& v) const;
    std::vector<std::string> successors(const std::string& v) const;

    bool operator==(const DependencyGraph&) const = default;
};

/// Prerequisite names that match no subsection (and self-references) are
/// dropped with a warning.
DependencyGraph build_dependency_graph(const Outline& outline, LlmClient& llm, Diagnostics& diagnostics);

struct CycleBreakResult {
    DependencyGraph graph;
    std::vector<Edge> removed;
};

/// Depth-first search from vertices in order (successors in vertex order);
/// every back edge, which closes a cycle with the current path, is removed.
CycleBreakResult break_cycles(const DependencyGraph& graph);

bool is_acyclic(const DependencyGraph& graph);

/// Longest path (in edges) ending at each vertex. `floor` raises the value
/// of individual vertices; the recursion then becomes
/// max(floor(v), 1 + max over predecessors). Throws PreconditionError on a
/// cyclic graph.
std::map<std::string, int> assign_stages(const DependencyGraph& graph, const std::map<std::string, int>& floor = {});

StagedPlan finalize_plan(const Outline& outline, const std::vector<RawPlanEntry>& raw,
                         const std::map<std::string, int>& stages, const DependencyGraph& graph);

/// Throws Error naming the first violation: unknown or missing ids,
/// duplicate entries, dependencies not strictly earlier, τ = 0 with
/// prerequisites. With `strict_roots`, an entry without prerequisites must
/// have τ = 0.
void check_plan_invariants(const StagedPlan& plan, bool strict_roots = true);

/// The plan's dependency graph over its own entries.
DependencyGraph plan_graph(const StagedPlan& plan);

struct PlanningResult {
    PlanningContext context;
    Outline draft_outline;
    Outline outline;
    DependencyGraph raw_graph;
    CycleBreakResult dag;
    StagedPlan plan;
};

/// Outline, raw plan, dependency graph, cycle breaking and stage assignment.
PlanningResult plan_survey(const PaperStore& survey_papers, const TopicSpec& spec, Providers& providers);

/// Raw plan, graph, cycle breaking and stages for an existing outline.
struct PlanBuild {
    DependencyGraph raw_graph;
    CycleBreakResult dag;
    StagedPlan plan;
};
PlanBuild build_plan(const Outline& outline, Providers& providers, const std::map<std::string, int>& floor = {});

}  // namespace tracewrite
