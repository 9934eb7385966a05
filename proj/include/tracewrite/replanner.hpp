#pragma once

#include "tracewrite/memory.hpp"
#include "tracewrite/planning.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

enum class RevisionKind { Merge, Delete, Rename, Add, Reorder };

std::string to_string(RevisionKind kind);
RevisionKind revision_kind_from_string(std::string_view name);

struct RevisionAction {
    RevisionKind kind = RevisionKind::Rename;
    std::vector<std::string> targets;
    std::string title;          // rename, add, merge (optional)
    std::string description;    // rename, add, merge (optional)
    std::string section_title;  // add: destination section
    std::optional<int> position;  // reorder: index within the section; add: optional

    json to_json() const;
    static RevisionAction from_json(const json& j);

    bool operator==(const RevisionAction&) const = default;
};

/// Empty string when the action is well formed for `outline` with the given
/// written set, otherwise the reason it is not.
std::string revision_problem(const RevisionAction& action, const Outline& outline,
                             const std::set<std::string>& written);

/// Asks the model for revisions of the unwritten subsections. Invalid actions
/// and actions touching written subsections are dropped with a warning. A
/// reply that stays malformed yields no actions and a warning.
std::vector<RevisionAction> propose_revisions(const Outline& outline, const StructureMemory& memory,
                                              const std::set<std::string>& written, LlmClient& llm,
                                              Diagnostics& diagnostics);

struct RevisionOutcome {
    Outline outline;
    std::vector<RevisionAction> applied;
    std::vector<RevisionAction> dropped;
};

/// Applies merge, delete, rename, add and reorder actions in that order
/// (stable within a kind). Merged subsections collapse into the first
/// target, which keeps its id and position. Actions that conflict with an
/// earlier one are dropped with a warning. Added subsections never take an
/// id from `retired_ids` (ids of subsections removed at earlier stages).
RevisionOutcome apply_revisions(const Outline& outline, const std::vector<RevisionAction>& actions,
                                Diagnostics& diagnostics, const std::set<std::string>& retired_ids = {});

/// Rebuilds the plan for `outline`: written entries are copied from
/// `previous` unchanged, unwritten entries are planned again with stages of
/// at least `current_stage + 1`. Edges into written subsections are ignored.
PlanBuild replan(const Outline& outline, const std::set<std::string>& written, const StagedPlan& previous,
                 int current_stage, Providers& providers);

}  // namespace tracewrite
