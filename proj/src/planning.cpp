#include "tracewrite/planning.hpp"

#include <algorithm>
#include <functional>
#include <queue>

namespace tracewrite {

// ---------------------------------------------------------------------------
// Outline
// ---------------------------------------------------------------------------

std::vector<const SubsectionSpec*> Outline::subsections() const {
    std::vector<const SubsectionSpec*> out;
    for (const auto& sec : sections) {
        for (const auto& s : sec.subsections) out.push_back(&s);
    }
    return out;
}

std::vector<std::string> Outline::subsection_ids() const {
    std::vector<std::string> out;
    for (const auto* s : subsections()) out.push_back(s->id);
    return out;
}

const SubsectionSpec* Outline::find(const std::string& id) const {
    for (const auto* s : subsections()) {
        if (s->id == id) return s;
    }
    return nullptr;
}

const SubsectionSpec* Outline::find_by_title(const std::string& title) const {
    const auto want = to_lower(trim(title));
    for (const auto* s : subsections()) {
        if (to_lower(trim(s->title)) == want) return s;
    }
    return nullptr;
}

const Section* Outline::section_of(const std::string& id) const {
    for (const auto& sec : sections) {
        for (const auto& s : sec.subsections) {
            if (s.id == id) return &sec;
        }
    }
    return nullptr;
}

std::size_t Outline::subsection_count() const { return subsections().size(); }

void Outline::validate() const {
    if (sections.empty()) throw PreconditionError("outline has no sections");
    std::set<std::string> titles;
    std::set<std::string> ids;
    for (const auto& sec : sections) {
        if (trim(sec.title).empty()) throw PreconditionError("outline section without title");
        if (sec.subsections.empty()) throw PreconditionError("section \"" + sec.title + "\" has no subsections");
        for (const auto& s : sec.subsections) {
            if (trim(s.id).empty()) throw PreconditionError("subsection without id: " + s.title);
            if (!ids.insert(s.id).second) throw PreconditionError("duplicate subsection id: " + s.id);
            if (trim(s.title).empty()) throw PreconditionError("subsection without title: " + s.id);
            if (!titles.insert(to_lower(trim(s.title))).second)
                throw PreconditionError("duplicate subsection title: " + s.title);
            if (trim(s.description).empty()) throw PreconditionError("subsection without description: " + s.title);
        }
    }
}

std::string Outline::next_id(const std::set<std::string>& reserved) const {
    std::set<std::string> used = reserved;
    for (const auto* s : subsections()) used.insert(s->id);
    for (std::size_t n = 1;; ++n) {
        auto id = "s" + std::to_string(n);
        if (!used.count(id)) return id;
    }
}

json outline_to_json(const Outline& outline) {
    json sections = json::array();
    for (const auto& sec : outline.sections) {
        json subs = json::array();
        for (const auto& s : sec.subsections) {
            subs.push_back({{"subsection_id", s.id},
                            {"subsection_title", s.title},
                            {"subsection_description", s.description}});
        }
        sections.push_back(
            {{"section_title", sec.title}, {"section_description", sec.description}, {"subsections", subs}});
    }
    return {{"schema_version", 1}, {"sections", sections}};
}

Outline outline_from_json(const json& j) {
    json sections;
    if (j.is_object() && j.contains("sections")) sections = j.at("sections");
    else if (j.is_array()) sections = j;
    else if (j.is_object() && j.contains("section_title")) sections = json::array({j});
    else throw ParseError("outline JSON has no sections", "root");

    Outline out;
    std::set<std::string> used;
    for (const auto& sec : sections) {
        for (const auto& s : sec.value("subsections", json::array())) {
            if (s.contains("subsection_id")) used.insert(s.at("subsection_id").get<std::string>());
        }
    }
    std::size_t counter = 0;
    auto fresh_id = [&] {
        std::string id;
        do id = "s" + std::to_string(++counter);
        while (used.count(id));
        used.insert(id);
        return id;
    };
    for (std::size_t si = 0; si < sections.size(); ++si) {
        const auto& sec = sections[si];
        if (!sec.is_object()) throw ParseError("section is not an object", "sections[" + std::to_string(si) + "]");
        Section section;
        section.title = sec.value("section_title", "");
        section.description = sec.value("section_description", "");
        for (const auto& s : sec.value("subsections", json::array())) {
            SubsectionSpec spec;
            spec.title = s.value("subsection_title", "");
            spec.description = s.value("subsection_description", "");
            spec.id = s.contains("subsection_id") ? s.at("subsection_id").get<std::string>() : fresh_id();
            section.subsections.push_back(std::move(spec));
        }
        out.sections.push_back(std::move(section));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Planning context
// ---------------------------------------------------------------------------

std::size_t PlanningContext::size() const {
    std::size_t n = 0;
    for (const auto& r : reviews) {
        n += r.title.size();
        for (const auto& h : r.headings) n += h.size() + 1;
    }
    for (const auto& [t, a] : abstracts) n += t.size() + a.size() + 1;
    return n;
}

json PlanningContext::to_json() const {
    json rs = json::array();
    for (const auto& r : reviews) rs.push_back({{"title", r.title}, {"outline", r.headings}});
    json as = json::array();
    for (const auto& [t, a] : abstracts) as.push_back({{"title", t}, {"abstract", a}});
    return {{"reviews", rs}, {"abstracts", as}};
}

PlanningContext build_planning_context(const PaperStore& papers, LlmClient& llm, Diagnostics& diagnostics,
                                       std::size_t cap) {
    if (papers.empty()) throw PreconditionError("build_planning_context: empty paper set");
    PlanningContext ctx;
    struct Abs {
        double relevance;
        std::string bibkey;
        std::string title;
        std::string abstract;
    };
    std::vector<Abs> abstracts;
    for (const auto& [key, rec] : papers.records) {
        if (rec.is_review) {
            if (rec.full_text && !trim(*rec.full_text).empty()) {
                try {
                    auto reply = llm.complete_structured(
                        {PromptRole::ReviewOutlineExtract, {{"title", rec.title}, {"text", *rec.full_text}}});
                    ReviewOutline ro{rec.title, {}};
                    for (const auto& h : reply.value.at("outline")) {
                        auto t = trim(h.get<std::string>());
                        if (!t.empty()) ro.headings.push_back(t);
                    }
                    if (!ro.headings.empty()) ctx.reviews.push_back(std::move(ro));
                } catch (const ProviderError& e) {
                    diagnostics.warn("planning", "outline extraction failed for " + key + ": " + e.what());
                }
            } else if (rec.has_abstract()) {
                ctx.reviews.push_back({rec.title, {rec.abstract}});
            }
        } else if (rec.has_abstract()) {
            abstracts.push_back({rec.relevance_score.value_or(0.0), key, rec.title, rec.abstract});
        }
    }
    std::stable_sort(abstracts.begin(), abstracts.end(), [](const Abs& a, const Abs& b) {
        if (a.relevance != b.relevance) return a.relevance > b.relevance;
        return a.bibkey < b.bibkey;
    });
    for (const auto& a : abstracts) ctx.abstracts.emplace_back(a.title, a.abstract);
    while (ctx.size() > cap && !ctx.abstracts.empty()) {
        ctx.abstracts.pop_back();
        ++ctx.dropped_abstracts;
    }
    if (ctx.dropped_abstracts > 0) {
        diagnostics.warn("planning", "planning context over cap, dropped " + std::to_string(ctx.dropped_abstracts) +
                                         " lowest-relevance abstracts");
    }
    return ctx;
}

namespace {

/// Local repair shared by generation and refinement.
Outline enforce_outline(Outline outline, Diagnostics* diagnostics) {
    std::set<std::string> titles;
    std::set<std::string> ids;
    Outline out;
    for (auto& sec : outline.sections) {
        Section kept{trim(sec.title), trim(sec.description), {}};
        for (auto& s : sec.subsections) {
            s.title = trim(s.title);
            s.description = trim(s.description);
            if (s.title.empty()) continue;
            if (!titles.insert(to_lower(s.title)).second) {
                if (diagnostics) diagnostics->warn("planning", "dropped duplicate subsection \"" + s.title + "\"");
                continue;
            }
            if (s.description.empty()) s.description = "Covers " + s.title + ".";
            if (s.id.empty() || !ids.insert(s.id).second) s.id.clear();
            kept.subsections.push_back(s);
        }
        if (kept.title.empty()) kept.title = "Section " + std::to_string(out.sections.size() + 1);
        if (!kept.subsections.empty()) out.sections.push_back(std::move(kept));
    }
    for (auto& sec : out.sections) {
        for (auto& s : sec.subsections) {
            if (s.id.empty()) {
                s.id = out.next_id();
            }
        }
    }
    return out;
}

std::string outline_prompt_json(const Outline& o) {
    auto j = outline_to_json(o);
    j.erase("schema_version");
    return j.dump();
}

}  // namespace

Outline generate_outline(const PlanningContext& context, const TopicSpec& spec, LlmClient& llm) {
    spec.validate();
    auto reply = llm.complete_structured({PromptRole::OutlineGen,
                                          {{"topic", spec.topic},
                                           {"description", spec.description},
                                           {"context", context.to_json().dump()}}});
    auto outline = enforce_outline(outline_from_json(reply.value), nullptr);
    if (outline.sections.empty()) throw SchemaViolation("outline generation produced no subsections", reply.raw);
    return outline;
}

Outline refine_outline(const Outline& draft, const TopicSpec& spec, LlmClient& llm, Diagnostics& diagnostics) {
    auto reply = llm.complete_structured(
        {PromptRole::OutlineRefine, {{"topic", spec.topic}, {"outline", outline_prompt_json(draft)}}});
    auto refined = outline_from_json(reply.value);
    // Keep draft ids for subsections that carry one or whose title survived.
    std::set<std::string> draft_ids;
    for (const auto& id : draft.subsection_ids()) draft_ids.insert(id);
    json reply_sections = reply.value.contains("sections") ? reply.value.at("sections") : json::array();
    std::size_t si = 0;
    for (auto& sec : refined.sections) {
        std::size_t k = 0;
        for (auto& s : sec.subsections) {
            std::string given;
            if (si < reply_sections.size()) {
                const auto& subs = reply_sections[si].value("subsections", json::array());
                if (k < subs.size()) given = subs[k].value("subsection_id", "");
            }
            const auto* match = draft.find_by_title(s.title);
            if (!given.empty() && draft_ids.count(given)) s.id = given;
            else if (match) s.id = match->id;
            else s.id.clear();
            ++k;
        }
        ++si;
    }
    auto out = enforce_outline(std::move(refined), &diagnostics);
    if (out.sections.empty()) {
        diagnostics.warn("planning", "outline refinement returned nothing usable, keeping the draft");
        return draft;
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

const PlanEntry* StagedPlan::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.subsection_id == id) return &e;
    }
    return nullptr;
}

PlanEntry* StagedPlan::find(const std::string& id) {
    for (auto& e : entries) {
        if (e.subsection_id == id) return &e;
    }
    return nullptr;
}

int StagedPlan::max_stage() const {
    int m = -1;
    for (const auto& e : entries) m = std::max(m, e.stage);
    return m;
}

std::map<int, std::vector<std::string>> StagedPlan::by_stage() const {
    std::map<int, std::vector<std::string>> out;
    for (const auto& e : entries) out[e.stage].push_back(e.subsection_id);
    return out;
}

json plan_to_json(const StagedPlan& plan) {
    json arr = json::array();
    for (const auto& e : plan.entries) {
        std::vector<std::string> deps;
        for (const auto& id : e.depends_on) {
            const auto* d = plan.find(id);
            deps.push_back(d ? d->title : id);
        }
        deps.insert(deps.end(), e.external_depends_on.begin(), e.external_depends_on.end());
        arr.push_back({{"subsection_id", e.subsection_id},
                       {"section_title", e.section_title},
                       {"subsection_title", e.title},
                       {"subsection_description", e.description},
                       {"index", e.stage},
                       {"trigger_additional_search", e.retrieval},
                       {"generate_table", e.table},
                       {"depends_on", deps}});
    }
    return {{"schema_version", 1}, {"plan", arr}};
}

StagedPlan plan_from_json(const json& j) {
    const json* arr = &j;
    if (j.is_object()) {
        if (!j.contains("plan")) throw ParseError("plan JSON has no \"plan\" array", "root");
        arr = &j.at("plan");
    }
    if (!arr->is_array()) throw ParseError("plan is not an array", "plan");

    StagedPlan plan;
    std::set<std::string> used;
    for (const auto& e : *arr) {
        if (e.is_object() && e.contains("subsection_id")) used.insert(e.at("subsection_id").get<std::string>());
    }
    std::size_t counter = 0;
    std::vector<std::vector<std::string>> dep_titles;
    for (std::size_t i = 0; i < arr->size(); ++i) {
        const auto& e = (*arr)[i];
        const auto where = "plan[" + std::to_string(i) + "]";
        if (!e.is_object()) throw ParseError("plan entry is not an object", where);
        for (const char* field : {"subsection_title", "index", "trigger_additional_search", "generate_table", "depends_on"}) {
            if (!e.contains(field)) throw ParseError(std::string("plan entry missing \"") + field + "\"", where);
        }
        PlanEntry p;
        if (e.contains("subsection_id")) {
            p.subsection_id = e.at("subsection_id").get<std::string>();
        } else {
            do p.subsection_id = "s" + std::to_string(++counter);
            while (used.count(p.subsection_id));
            used.insert(p.subsection_id);
        }
        p.section_title = e.value("section_title", "");
        p.title = e.at("subsection_title").get<std::string>();
        p.description = e.value("subsection_description", "");
        if (!e.at("index").is_number_integer()) throw ParseError("index is not an integer", where);
        p.stage = e.at("index").get<int>();
        if (!e.at("trigger_additional_search").is_boolean() || !e.at("generate_table").is_boolean())
            throw ParseError("plan flags must be booleans", where);
        p.retrieval = e.at("trigger_additional_search").get<bool>();
        p.table = e.at("generate_table").get<bool>();
        dep_titles.push_back(e.at("depends_on").get<std::vector<std::string>>());
        plan.entries.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
        for (const auto& t : dep_titles[i]) {
            const PlanEntry* target = nullptr;
            for (const auto& other : plan.entries) {
                if (to_lower(trim(other.title)) == to_lower(trim(t))) target = &other;
            }
            if (target) plan.entries[i].depends_on.push_back(target->subsection_id);
            else plan.entries[i].external_depends_on.push_back(t);
        }
    }
    return plan;
}

std::vector<RawPlanEntry> generate_raw_plan(const Outline& outline, LlmClient& llm, Diagnostics& diagnostics) {
    outline.validate();
    std::map<std::string, RawPlanEntry> got;
    for (int round = 0; round < 2 && got.size() < outline.subsection_count(); ++round) {
        auto reply = llm.complete_structured({PromptRole::RawPlan, {{"outline", outline_prompt_json(outline)}}});
        for (const auto& e : reply.value.at("entries")) {
            const auto* s = outline.find_by_title(e.at("subsection_title").get<std::string>());
            if (!s) {
                diagnostics.warn("planning", "raw plan names unknown subsection \"" +
                                                 e.at("subsection_title").get<std::string>() + "\"");
                continue;
            }
            got.emplace(s->id, RawPlanEntry{s->id, e.at("trigger_additional_search").get<bool>(),
                                            e.at("generate_table").get<bool>()});
        }
    }
    std::vector<RawPlanEntry> out;
    for (const auto* s : outline.subsections()) {
        auto it = got.find(s->id);
        if (it == got.end()) throw SchemaViolation("raw plan is missing subsection \"" + s->title + "\"", "");
        out.push_back(it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

bool DependencyGraph::add_edge(const std::string& from, const std::string& to) {
    auto known = [&](const std::string& v) { return std::find(vertices.begin(), vertices.end(), v) != vertices.end(); };
    if (!known(from) || !known(to)) throw PreconditionError("edge references unknown vertex: " + from + " -> " + to);
    if (from == to || has_edge(from, to)) return false;
    edges.emplace_back(from, to);
    return true;
}

bool DependencyGraph::has_edge(const std::string& from, const std::string& to) const {
    return std::find(edges.begin(), edges.end(), Edge{from, to}) != edges.end();
}

std::vector<std::string> DependencyGraph::predecessors(const std::string& v) const {
    std::vector<std::string> out;
    for (const auto& u : vertices) {
        if (has_edge(u, v)) out.push_back(u);
    }
    return out;
}

std::vector<std::string> DependencyGraph::successors(const std::string& v) const {
    std::vector<std::string> out;
    for (const auto& w : vertices) {
        if (has_edge(v, w)) out.push_back(w);
    }
    return out;
}

DependencyGraph build_dependency_graph(const Outline& outline, LlmClient& llm, Diagnostics& diagnostics) {
    outline.validate();
    DependencyGraph g;
    g.vertices = outline.subsection_ids();
    auto reply = llm.complete_structured({PromptRole::DepGraph, {{"outline", outline_prompt_json(outline)}}});
    for (const auto& d : reply.value.at("dependencies")) {
        const auto name = d.at("subsection_title").get<std::string>();
        const auto* dependent = outline.find_by_title(name);
        if (!dependent) {
            diagnostics.warn("planning", "dependency list for unknown subsection \"" + name + "\" dropped");
            continue;
        }
        for (const auto& p : d.at("depends_on")) {
            const auto pre_name = p.get<std::string>();
            const auto* pre = outline.find_by_title(pre_name);
            if (!pre) {
                diagnostics.warn("planning", "unknown prerequisite \"" + pre_name + "\" of \"" + name + "\" dropped");
                continue;
            }
            if (pre->id == dependent->id) {
                diagnostics.warn("planning", "self-dependency of \"" + name + "\" dropped");
                continue;
            }
            g.add_edge(pre->id, dependent->id);
        }
    }
    return g;
}

namespace {

struct Adjacency {
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<std::size_t>> succ;  // vertex order
};

Adjacency adjacency(const DependencyGraph& g) {
    Adjacency a;
    for (std::size_t i = 0; i < g.vertices.size(); ++i) a.index[g.vertices[i]] = i;
    a.succ.resize(g.vertices.size());
    for (const auto& [u, v] : g.edges) {
        auto iu = a.index.find(u);
        auto iv = a.index.find(v);
        if (iu == a.index.end() || iv == a.index.end()) throw PreconditionError("edge references unknown vertex");
        a.succ[iu->second].push_back(iv->second);
    }
    for (auto& s : a.succ) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    return a;
}

}  // namespace

CycleBreakResult break_cycles(const DependencyGraph& graph) {
    auto adj = adjacency(graph);
    const auto n = graph.vertices.size();
    enum Color { White, Grey, Black };
    std::vector<Color> color(n, White);
    std::set<std::pair<std::size_t, std::size_t>> back;

    std::function<void(std::size_t)> visit = [&](std::size_t u) {
        color[u] = Grey;
        for (auto v : adj.succ[u]) {
            if (color[v] == Grey) back.emplace(u, v);
            else if (color[v] == White) visit(v);
        }
        color[u] = Black;
    };
    for (std::size_t u = 0; u < n; ++u) {
        if (color[u] == White) visit(u);
    }

    CycleBreakResult out;
    out.graph.vertices = graph.vertices;
    for (const auto& e : graph.edges) {
        auto key = std::make_pair(adj.index.at(e.first), adj.index.at(e.second));
        if (back.count(key)) out.removed.push_back(e);
        else out.graph.edges.push_back(e);
    }
    return out;
}

bool is_acyclic(const DependencyGraph& graph) {
    auto adj = adjacency(graph);
    std::vector<std::size_t> indeg(graph.vertices.size(), 0);
    for (const auto& s : adj.succ) {
        for (auto v : s) ++indeg[v];
    }
    std::queue<std::size_t> q;
    for (std::size_t i = 0; i < indeg.size(); ++i) {
        if (indeg[i] == 0) q.push(i);
    }
    std::size_t seen = 0;
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        ++seen;
        for (auto v : adj.succ[u]) {
            if (--indeg[v] == 0) q.push(v);
        }
    }
    return seen == graph.vertices.size();
}

std::map<std::string, int> assign_stages(const DependencyGraph& graph, const std::map<std::string, int>& floor) {
    auto adj = adjacency(graph);
    const auto n = graph.vertices.size();
    std::vector<std::size_t> indeg(n, 0);
    for (const auto& s : adj.succ) {
        for (auto v : s) ++indeg[v];
    }
    std::vector<int> tau(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto f = floor.find(graph.vertices[i]);
        if (f != floor.end()) tau[i] = std::max(0, f->second);
    }
    std::queue<std::size_t> q;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] == 0) q.push(i);
    }
    std::size_t done = 0;
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        ++done;
        for (auto v : adj.succ[u]) {
            tau[v] = std::max(tau[v], tau[u] + 1);
            if (--indeg[v] == 0) q.push(v);
        }
    }
    if (done != n) throw PreconditionError("assign_stages: graph has a cycle");
    std::map<std::string, int> out;
    for (std::size_t i = 0; i < n; ++i) out[graph.vertices[i]] = tau[i];
    return out;
}

StagedPlan finalize_plan(const Outline& outline, const std::vector<RawPlanEntry>& raw,
                         const std::map<std::string, int>& stages, const DependencyGraph& graph) {
    std::map<std::string, RawPlanEntry> by_id;
    for (const auto& r : raw) by_id[r.subsection_id] = r;
    StagedPlan plan;
    for (const auto& sec : outline.sections) {
        for (const auto& s : sec.subsections) {
            auto st = stages.find(s.id);
            if (st == stages.end()) throw PreconditionError("finalize_plan: no stage for " + s.id);
            PlanEntry e;
            e.subsection_id = s.id;
            e.section_title = sec.title;
            e.title = s.title;
            e.description = s.description;
            if (auto r = by_id.find(s.id); r != by_id.end()) {
                e.retrieval = r->second.retrieval;
                e.table = r->second.table;
            }
            e.stage = st->second;
            e.depends_on = graph.predecessors(s.id);
            plan.entries.push_back(std::move(e));
        }
    }
    return plan;
}

DependencyGraph plan_graph(const StagedPlan& plan) {
    DependencyGraph g;
    for (const auto& e : plan.entries) g.vertices.push_back(e.subsection_id);
    for (const auto& e : plan.entries) {
        for (const auto& d : e.depends_on) g.add_edge(d, e.subsection_id);
    }
    return g;
}

void check_plan_invariants(const StagedPlan& plan, bool strict_roots) {
    std::set<std::string> ids;
    for (const auto& e : plan.entries) {
        if (trim(e.subsection_id).empty()) throw Error("plan entry without subsection id");
        if (!ids.insert(e.subsection_id).second) throw Error("duplicate plan entry " + e.subsection_id);
        if (trim(e.title).empty()) throw Error("plan entry " + e.subsection_id + " has no title");
        if (e.stage < 0) throw Error("plan entry " + e.subsection_id + " has a negative index");
    }
    for (const auto& e : plan.entries) {
        std::set<std::string> seen;
        for (const auto& d : e.depends_on) {
            if (d == e.subsection_id) throw Error("plan entry " + e.subsection_id + " depends on itself");
            if (!seen.insert(d).second) throw Error("plan entry " + e.subsection_id + " repeats dependency " + d);
            const auto* target = plan.find(d);
            if (!target) throw Error("plan entry " + e.subsection_id + " depends on unknown " + d);
            if (target->stage >= e.stage)
                throw Error("plan entry " + e.subsection_id + " (index " + std::to_string(e.stage) +
                            ") is not after its prerequisite " + d + " (index " + std::to_string(target->stage) + ")");
        }
        const bool has_prereq = !e.depends_on.empty() || !e.external_depends_on.empty();
        if (has_prereq && e.stage == 0) throw Error("plan entry " + e.subsection_id + " has prerequisites but index 0");
        if (strict_roots && !has_prereq && e.stage != 0)
            throw Error("plan entry " + e.subsection_id + " has no prerequisites but index " + std::to_string(e.stage));
    }
}

PlanBuild build_plan(const Outline& outline, Providers& providers, const std::map<std::string, int>& floor) {
    PlanBuild b;
    auto raw = generate_raw_plan(outline, providers.llm, providers.diagnostics);
    b.raw_graph = build_dependency_graph(outline, providers.llm, providers.diagnostics);
    b.dag = break_cycles(b.raw_graph);
    for (const auto& [u, v] : b.dag.removed) {
        providers.diagnostics.warn("planning", "removed dependency " + u + " -> " + v + " to break a cycle");
    }
    auto stages = assign_stages(b.dag.graph, floor);
    b.plan = finalize_plan(outline, raw, stages, b.dag.graph);
    return b;
}

PlanningResult plan_survey(const PaperStore& survey_papers, const TopicSpec& spec, Providers& providers) {
    PlanningResult r;
    auto stage = [](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const StageError&) {
            throw;
        } catch (const ProviderError& e) {
            throw StageError(name, e.what(), true);
        } catch (const PreconditionError& e) {
            throw StageError(name, e.what());
        }
    };
    stage("planning/context", [&] { r.context = build_planning_context(survey_papers, providers.llm, providers.diagnostics); });
    stage("planning/outline", [&] {
        r.draft_outline = generate_outline(r.context, spec, providers.llm);
        r.outline = refine_outline(r.draft_outline, spec, providers.llm, providers.diagnostics);
    });
    stage("planning/plan", [&] {
        auto b = build_plan(r.outline, providers);
        r.raw_graph = std::move(b.raw_graph);
        r.dag = std::move(b.dag);
        r.plan = std::move(b.plan);
    });
    return r;
}

}  // namespace tracewrite
