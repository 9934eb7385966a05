#include "tracewrite/replanner.hpp"

#include <algorithm>

namespace tracewrite {

namespace {

constexpr RevisionKind kOrder[] = {RevisionKind::Merge, RevisionKind::Delete, RevisionKind::Rename,
                                   RevisionKind::Add, RevisionKind::Reorder};

int rank(RevisionKind k) {
    for (int i = 0; i < 5; ++i) {
        if (kOrder[i] == k) return i;
    }
    return 5;
}

struct Position {
    std::size_t section = 0;
    std::size_t index = 0;
};

std::optional<Position> locate(const Outline& outline, const std::string& id) {
    for (std::size_t s = 0; s < outline.sections.size(); ++s) {
        const auto& subs = outline.sections[s].subsections;
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (subs[i].id == id) return Position{s, i};
        }
    }
    return std::nullopt;
}

bool title_taken(const Outline& outline, const std::string& title, const std::string& except_id) {
    const auto* hit = outline.find_by_title(title);
    return hit && hit->id != except_id;
}

json outline_for_revision(const Outline& outline, const std::set<std::string>& written) {
    json sections = json::array();
    for (const auto& sec : outline.sections) {
        json subs = json::array();
        for (const auto& s : sec.subsections) {
            subs.push_back({{"subsection_id", s.id},
                            {"subsection_title", s.title},
                            {"subsection_description", s.description},
                            {"written", written.count(s.id) > 0}});
        }
        sections.push_back({{"section_title", sec.title}, {"section_description", sec.description}, {"subsections", subs}});
    }
    return sections;
}

}  // namespace

std::string to_string(RevisionKind kind) {
    switch (kind) {
        case RevisionKind::Merge: return "merge";
        case RevisionKind::Delete: return "delete";
        case RevisionKind::Rename: return "rename";
        case RevisionKind::Add: return "add";
        case RevisionKind::Reorder: return "reorder";
    }
    return "rename";
}

RevisionKind revision_kind_from_string(std::string_view name) {
    for (auto k : kOrder) {
        if (to_string(k) == name) return k;
    }
    throw PreconditionError("unknown revision kind: " + std::string(name));
}

json RevisionAction::to_json() const {
    json j{{"kind", to_string(kind)}, {"targets", targets}};
    if (!title.empty()) j["title"] = title;
    if (!description.empty()) j["description"] = description;
    if (!section_title.empty()) j["section_title"] = section_title;
    if (position) j["position"] = *position;
    return j;
}

RevisionAction RevisionAction::from_json(const json& j) {
    RevisionAction a;
    a.kind = revision_kind_from_string(j.at("kind").get<std::string>());
    a.targets = j.value("targets", std::vector<std::string>{});
    a.title = trim(j.value("title", ""));
    a.description = trim(j.value("description", ""));
    a.section_title = trim(j.value("section_title", ""));
    if (j.contains("position") && j["position"].is_number_integer()) a.position = j["position"].get<int>();
    return a;
}

std::string revision_problem(const RevisionAction& action, const Outline& outline,
                             const std::set<std::string>& written) {
    std::set<std::string> distinct(action.targets.begin(), action.targets.end());
    if (distinct.size() != action.targets.size()) return "repeated target";
    for (const auto& t : action.targets) {
        if (!outline.find(t)) return "unknown target " + t;
        if (written.count(t)) return "target " + t + " is already written";
    }
    switch (action.kind) {
        case RevisionKind::Merge:
            if (action.targets.size() < 2) return "merge needs at least two targets";
            break;
        case RevisionKind::Delete:
            if (action.targets.empty()) return "delete needs a target";
            break;
        case RevisionKind::Rename:
            if (action.targets.size() != 1) return "rename needs exactly one target";
            if (action.title.empty() && action.description.empty()) return "rename without a new title or description";
            break;
        case RevisionKind::Add:
            if (!action.targets.empty()) return "add takes no targets";
            if (action.title.empty() || action.description.empty()) return "add needs a title and a description";
            break;
        case RevisionKind::Reorder:
            if (action.targets.size() != 1) return "reorder needs exactly one target";
            if (!action.position || *action.position < 0) return "reorder needs a non-negative position";
            break;
    }
    return {};
}

std::vector<RevisionAction> propose_revisions(const Outline& outline, const StructureMemory& memory,
                                              const std::set<std::string>& written, LlmClient& llm,
                                              Diagnostics& diagnostics) {
    auto ids = outline.subsection_ids();
    if (std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return written.count(id) > 0; })) {
        throw PreconditionError("propose_revisions: no unwritten subsections");
    }
    StructuredReply reply;
    try {
        reply = llm.complete_structured({PromptRole::Revision,
                                         {{"outline", outline_for_revision(outline, written).dump()},
                                          {"memory", memory.prompt_json().dump()}}});
    } catch (const SchemaViolation& e) {
        diagnostics.warn("replanner", std::string("revision reply unusable, outline left unrevised: ") + e.what());
        return {};
    }
    std::vector<RevisionAction> out;
    for (const auto& j : reply.value.at("actions")) {
        RevisionAction a;
        try {
            a = RevisionAction::from_json(j);
        } catch (const std::exception& e) {
            diagnostics.warn("replanner", std::string("malformed revision action rejected: ") + e.what());
            continue;
        }
        if (auto problem = revision_problem(a, outline, written); !problem.empty()) {
            diagnostics.warn("replanner", to_string(a.kind) + " rejected: " + problem);
            continue;
        }
        out.push_back(std::move(a));
    }
    return out;
}

RevisionOutcome apply_revisions(const Outline& outline, const std::vector<RevisionAction>& actions,
                                Diagnostics& diagnostics, const std::set<std::string>& retired_ids) {
    RevisionOutcome r{outline, {}, {}};
    std::set<std::string> reserved = retired_ids;
    for (const auto& id : outline.subsection_ids()) reserved.insert(id);
    std::vector<const RevisionAction*> ordered;
    for (const auto& a : actions) ordered.push_back(&a);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const RevisionAction* a, const RevisionAction* b) { return rank(a->kind) < rank(b->kind); });

    auto& o = r.outline;
    for (const auto* a : ordered) {
        std::string problem;
        for (const auto& t : a->targets) {
            if (!o.find(t)) problem = "target " + t + " no longer exists";
        }
        if (problem.empty()) {
            switch (a->kind) {
                case RevisionKind::Merge: {
                    auto first = *locate(o, a->targets.front());
                    auto& keep = o.sections[first.section].subsections[first.index];
                    std::string title = a->title.empty() ? keep.title : a->title;
                    if (title_taken(o, title, keep.id) &&
                        std::find(a->targets.begin(), a->targets.end(), o.find_by_title(title)->id) == a->targets.end()) {
                        problem = "merged title collides with \"" + title + "\"";
                        break;
                    }
                    std::string description = a->description;
                    if (description.empty()) {
                        std::vector<std::string> parts;
                        for (const auto& t : a->targets) parts.push_back(o.find(t)->description);
                        description = join(parts, " ");
                    }
                    keep.title = title;
                    keep.description = description;
                    for (std::size_t i = 1; i < a->targets.size(); ++i) {
                        auto p = *locate(o, a->targets[i]);
                        auto& subs = o.sections[p.section].subsections;
                        subs.erase(subs.begin() + static_cast<long>(p.index));
                    }
                    break;
                }
                case RevisionKind::Delete: {
                    if (o.subsection_count() <= a->targets.size()) {
                        problem = "deleting would leave the outline empty";
                        break;
                    }
                    for (const auto& t : a->targets) {
                        auto p = *locate(o, t);
                        auto& subs = o.sections[p.section].subsections;
                        subs.erase(subs.begin() + static_cast<long>(p.index));
                    }
                    break;
                }
                case RevisionKind::Rename: {
                    auto p = *locate(o, a->targets.front());
                    auto& s = o.sections[p.section].subsections[p.index];
                    if (!a->title.empty() && title_taken(o, a->title, s.id)) {
                        problem = "title \"" + a->title + "\" already used";
                        break;
                    }
                    if (!a->title.empty()) s.title = a->title;
                    if (!a->description.empty()) s.description = a->description;
                    break;
                }
                case RevisionKind::Add: {
                    if (title_taken(o, a->title, "")) {
                        problem = "title \"" + a->title + "\" already used";
                        break;
                    }
                    SubsectionSpec s{o.next_id(reserved), a->title, a->description};
                    reserved.insert(s.id);
                    Section* dest = nullptr;
                    for (auto& sec : o.sections) {
                        if (!a->section_title.empty() && to_lower(sec.title) == to_lower(a->section_title)) dest = &sec;
                    }
                    if (!dest && !a->section_title.empty()) {
                        o.sections.push_back({a->section_title, "", {}});
                        dest = &o.sections.back();
                    }
                    if (!dest) dest = &o.sections.back();
                    auto at = dest->subsections.size();
                    if (a->position) at = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, *a->position)), at);
                    dest->subsections.insert(dest->subsections.begin() + static_cast<long>(at), std::move(s));
                    break;
                }
                case RevisionKind::Reorder: {
                    auto p = *locate(o, a->targets.front());
                    auto& subs = o.sections[p.section].subsections;
                    auto moved = subs[p.index];
                    subs.erase(subs.begin() + static_cast<long>(p.index));
                    auto at = std::min<std::size_t>(static_cast<std::size_t>(*a->position), subs.size());
                    subs.insert(subs.begin() + static_cast<long>(at), std::move(moved));
                    break;
                }
            }
        }
        if (!problem.empty()) {
            diagnostics.warn("replanner", to_string(a->kind) + " dropped: " + problem);
            r.dropped.push_back(*a);
        } else {
            r.applied.push_back(*a);
        }
    }
    o.sections.erase(std::remove_if(o.sections.begin(), o.sections.end(),
                                    [](const Section& s) { return s.subsections.empty(); }),
                     o.sections.end());
    o.validate();
    return r;
}

PlanBuild replan(const Outline& outline, const std::set<std::string>& written, const StagedPlan& previous,
                 int current_stage, Providers& providers) {
    outline.validate();
    for (const auto& id : written) {
        if (!outline.find(id)) throw PreconditionError("replan: written subsection " + id + " missing from the outline");
        if (!previous.find(id)) throw PreconditionError("replan: written subsection " + id + " has no previous entry");
    }
    PlanBuild b;
    auto raw = generate_raw_plan(outline, providers.llm, providers.diagnostics);
    b.raw_graph = build_dependency_graph(outline, providers.llm, providers.diagnostics);

    DependencyGraph open;
    open.vertices = b.raw_graph.vertices;
    for (const auto& [u, v] : b.raw_graph.edges) {
        if (!written.count(v)) open.add_edge(u, v);
    }
    b.dag = break_cycles(open);
    for (const auto& [u, v] : b.dag.removed) {
        providers.diagnostics.warn("replanner", "removed dependency " + u + " -> " + v + " to break a cycle");
    }
    std::map<std::string, int> floor;
    for (const auto& id : outline.subsection_ids()) {
        floor[id] = written.count(id) ? previous.find(id)->stage : current_stage + 1;
    }
    auto stages = assign_stages(b.dag.graph, floor);
    for (const auto& id : written) {
        for (const auto& d : previous.find(id)->depends_on) b.dag.graph.add_edge(d, id);
    }
    b.plan = finalize_plan(outline, raw, stages, b.dag.graph);
    for (auto& e : b.plan.entries) {
        if (written.count(e.subsection_id)) e = *previous.find(e.subsection_id);
    }
    check_plan_invariants(b.plan, false);
    return b;
}

}  // namespace tracewrite
