#include "tracewrite/controller.hpp"

#include "tracewrite/citations.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace tracewrite {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

template <typename Fn>
auto as_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const ProviderError& e) {
        throw StageError(stage, e.what(), true);
    } catch (const PreconditionError& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// RunLog
// ---------------------------------------------------------------------------

RunLog::RunLog(const fs::path& path, bool append) {
    fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw IoError("cannot open run log " + path.string());
}

void RunLog::event(const std::string& kind, json payload) {
    std::lock_guard lock(mutex_);
    json e{{"seq", seq_++}, {"event", kind}, {"data", std::move(payload)}};
    if (out_.is_open()) {
        out_ << e.dump() << "\n";
        out_.flush();
    }
    events_.push_back(std::move(e));
}

std::vector<json> RunLog::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

// ---------------------------------------------------------------------------
// RunState
// ---------------------------------------------------------------------------

json RunState::to_json() const {
    return {{"schema_version", 1},
            {"topic", spec.topic},
            {"description", spec.description},
            {"outline", outline_to_json(outline)},
            {"plan", plan_to_json(plan)},
            {"memory", memory.to_json()},
            {"completed", completed},
            {"current_stage", current_stage},
            {"store", store_to_json(store)},
            {"sidecars", sidecars},
            {"texts", texts},
            {"plan_history", plan_history},
            {"survey_retrieval", survey_retrieval}};
}

RunState RunState::from_json(const json& j) {
    try {
        RunState s;
        s.spec.topic = j.at("topic").get<std::string>();
        s.spec.description = j.value("description", "");
        s.outline = outline_from_json(j.at("outline"));
        s.plan = plan_from_json(j.at("plan"));
        s.memory = StructureMemory::from_json(j.at("memory"));
        s.completed = j.at("completed").get<std::set<std::string>>();
        s.current_stage = j.at("current_stage").get<int>();
        s.store = store_from_json(j.at("store"));
        s.sidecars = j.value("sidecars", std::map<std::string, json>{});
        s.texts = j.value("texts", std::map<std::string, std::string>{});
        s.plan_history = j.value("plan_history", std::vector<json>{});
        s.survey_retrieval = j.value("survey_retrieval", json::object());
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed checkpoint: ") + e.what(), "checkpoint");
    }
}

std::optional<StageSet> next_stage(const RunState& state) {
    std::optional<int> best;
    for (const auto& e : state.plan.entries) {
        if (state.completed.count(e.subsection_id)) continue;
        if (!best || e.stage < *best) best = e.stage;
    }
    if (!best) return std::nullopt;
    StageSet set{*best, {}};
    for (const auto& e : state.plan.entries) {
        if (!state.completed.count(e.subsection_id) && e.stage == *best) set.ids.push_back(e.subsection_id);
    }
    return set;
}

// ---------------------------------------------------------------------------
// Merging writer output
// ---------------------------------------------------------------------------

CiteMerge merge_store(PaperStore& store, const PaperStore& writer_store) {
    CiteMerge m;
    for (const auto& [key, rec] : writer_store.records) {
        auto it = writer_store.provenance.find(key);
        std::vector<std::string> tags;
        if (it != writer_store.provenance.end()) tags.assign(it->second.begin(), it->second.end());
        if (tags.empty()) tags.push_back("");
        std::string target;
        for (const auto& tag : tags) target = upsert(store, {rec}, tag).front();
        if (target != key) m.renamed[key] = target;
    }
    return m;
}

void apply_renames(SubsectionResult& r, const std::map<std::string, std::string>& renamed) {
    if (renamed.empty()) return;
    auto key = [&](const std::string& k) {
        auto it = renamed.find(k);
        return it == renamed.end() ? k : it->second;
    };
    // Two phases so chains such as a -> b, b -> c stay correct.
    std::size_t n = 0;
    std::map<std::string, std::string> temp;
    for (const auto& [from, to] : renamed) {
        auto t = "tw-rename-" + std::to_string(n++);
        temp[t] = to;
        r.text = rename_cite_key(r.text, from, t);
    }
    for (const auto& [t, to] : temp) r.text = rename_cite_key(r.text, t, to);
    for (auto& k : r.subsection_bibkeys) k = key(k);
    for (auto& p : r.passages) {
        auto hash = p.entry_key.find('#');
        auto renamed_key = key(p.bibkey);
        if (renamed_key != p.bibkey) {
            p.entry_key = renamed_key + (hash == std::string::npos ? "" : p.entry_key.substr(hash));
            p.bibkey = renamed_key;
        }
    }
    for (auto& t : r.traced) t.bibkey = key(t.bibkey);
}

// ---------------------------------------------------------------------------
// Final refinement
// ---------------------------------------------------------------------------

json FinalRefineReport::to_json() const {
    json f = json::array();
    for (const auto& [id, issue] : flagged) f.push_back({{"subsection_id", id}, {"issue", issue}});
    return {{"flagged", f}, {"rewritten", rewritten}, {"reverted", reverted}};
}

FinalRefineReport final_refine(const Outline& outline, std::map<std::string, std::string>& texts,
                               const StructureMemory& memory, LlmClient& llm, Diagnostics& diagnostics) {
    FinalRefineReport report;
    std::vector<std::string> order;
    json doc = json::array();
    for (const auto& id : outline.subsection_ids()) {
        auto it = texts.find(id);
        if (it == texts.end()) throw PreconditionError("final_refine: subsection " + id + " is not written");
        order.push_back(id);
        doc.push_back({{"id", id}, {"text", it->second}});
    }
    StructuredReply diagnosis;
    try {
        diagnosis = llm.complete_structured({PromptRole::GlobalDiagnosis, {{"document", doc.dump()}}});
    } catch (const ProviderError& e) {
        diagnostics.warn("controller", std::string("global diagnosis failed, document left unrefined: ") + e.what());
        return report;
    }
    std::set<std::string> seen;
    for (const auto& f : diagnosis.value.at("flagged")) {
        auto id = f.at("subsection_id").get<std::string>();
        if (!texts.count(id)) {
            diagnostics.warn("controller", "diagnosis flagged unknown subsection " + id);
            continue;
        }
        if (seen.insert(id).second) report.flagged.emplace_back(id, f.value("issue", ""));
    }
    json terms = memory.prompt_json().at("terms");
    for (const auto& [id, issue] : report.flagged) {
        std::vector<std::string> others;
        for (const auto& o : order) {
            if (o != id) others.push_back(texts.at(o));
        }
        const auto& before = texts.at(id);
        try {
            auto reply = llm.complete_structured({PromptRole::Refinement,
                                                  {{"pass", "global"},
                                                   {"title", outline.find(id)->title},
                                                   {"text", before},
                                                   {"skeleton", issue},
                                                   {"context", json{{"other_text", join(others, "\n\n")}, {"terms", terms}}.dump()}}});
            auto after = trim(reply.value.at("text").get<std::string>());
            if (after.empty() || cite_key_set(after) != cite_key_set(before)) {
                diagnostics.warn("controller", "global rewrite of " + id + " changed its citations, kept the previous text");
                report.reverted.push_back(id);
                continue;
            }
            if (after != before) {
                texts[id] = after;
                report.rewritten.push_back(id);
            }
        } catch (const ProviderError& e) {
            diagnostics.warn("controller", "global rewrite of " + id + " failed: " + e.what());
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

std::vector<PaperRecord> table_papers(const json& sidecar, const PaperStore& store) {
    std::vector<std::string> keys;
    auto add = [&](const std::string& k) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    };
    for (const auto& p : sidecar.value("passages", json::array())) add(p.at("bibkey").get<std::string>());
    for (const auto& t : sidecar.value("traced", json::array())) add(t.at("bibkey").get<std::string>());
    std::vector<PaperRecord> out;
    for (const auto& k : keys) {
        if (!store.contains(k)) continue;
        const auto& rec = store.at(k);
        if (!rec.is_review) out.push_back(rec);
    }
    return out;
}

std::map<std::string, GeneratedTable> dispatch_tables(const RunState& state, Providers& providers,
                                                      const ChunkingOptions& chunking) {
    std::map<std::string, GeneratedTable> tables;
    auto& diag = providers.diagnostics;
    for (const auto& e : state.plan.entries) {
        if (!e.table) continue;
        auto sc = state.sidecars.find(e.subsection_id);
        auto text = state.texts.find(e.subsection_id);
        if (sc == state.sidecars.end() || text == state.texts.end()) {
            diag.warn("tables", "table for " + e.subsection_id + " skipped: subsection not written");
            continue;
        }
        auto papers = table_papers(sc->second, state.store);
        if (papers.empty()) {
            diag.warn("tables", "table for " + e.subsection_id + " skipped: no non-review papers");
            continue;
        }
        try {
            std::set<std::string> keys;
            for (const auto& p : papers) keys.insert(p.bibkey);
            auto index = build_index(state.store, providers.embedder, chunking, keys);
            TableRequest req{e.subsection_id, e.title, e.description, strip_cites(text->second), papers};
            auto table = build_table(req, index, providers);
            table.validate(state.store);
            tables.emplace(e.subsection_id, std::move(table));
        } catch (const Error& err) {
            diag.warn("tables", "table for " + e.subsection_id + " skipped: " + err.what());
        }
    }
    return tables;
}

SurveyDocument assemble_document(const RunState& state, const std::map<std::string, GeneratedTable>& tables) {
    SurveyDocument doc;
    doc.title = state.spec.topic;
    for (const auto& sec : state.outline.sections) {
        DocSection ds{sec.title, {}};
        for (const auto& s : sec.subsections) {
            auto it = state.texts.find(s.id);
            if (it == state.texts.end()) throw PreconditionError("assemble_document: " + s.id + " is not written");
            ds.subsections.push_back({s.id, s.title, it->second});
            if (auto t = tables.find(s.id); t != tables.end()) doc.tables.emplace(s.id, t->second);
        }
        doc.sections.push_back(std::move(ds));
    }
    for (const auto& [id, sc] : state.sidecars) {
        const auto& passages = sc.value("passages", json::array());
        for (const auto& t : sc.value("traced", json::array())) {
            auto idx = t.at("passage_index").get<std::size_t>();
            auto& from = doc.traced_from[t.at("bibkey").get<std::string>()];
            if (idx < passages.size()) from.insert(passages[idx].at("bibkey").get<std::string>());
        }
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Pipeline::Pipeline(RunConfig config, Providers& providers, RunLog& log)
    : config_(std::move(config)), providers_(providers), log_(log) {}

void Pipeline::log_calls(const std::string& phase) {
    auto now = providers_.llm.call_counts();
    json diff = json::object();
    for (const auto& [role, n] : now) {
        auto before = last_counts_.count(role) ? last_counts_.at(role) : 0;
        if (n > before) diff[role] = n - before;
    }
    last_counts_ = now;
    log_.event("provider_calls", {{"phase", phase}, {"llm", diff}});
}

WriterOptions Pipeline::writer_options(const RunState& state) const {
    WriterOptions o;
    o.n_candidates = config_.n_candidates;
    o.word_budget = config_.word_budget(state.outline.subsection_count());
    o.rag = config_.rag;
    o.chunking = config_.chunking;
    o.retrieval = config_.retrieval;
    return o;
}

void Pipeline::write_checkpoint(const RunState& state, const std::string& name) const {
    write_file(config_.out_dir / "checkpoints" / (name + ".json"), state.to_json().dump() + "\n");
    log_.event("checkpoint", {{"name", name}, {"stage", state.current_stage}});
}

std::optional<RunState> Pipeline::load_checkpoint(const fs::path& out_dir) {
    const auto dir = out_dir / "checkpoints";
    if (!fs::exists(dir)) return std::nullopt;
    std::optional<std::pair<int, fs::path>> best;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto stem = entry.path().stem().string();
        if (entry.path().extension() != ".json") continue;
        int rank = -1;
        if (stem == "planning") {
            rank = -1;
        } else if (stem.rfind("stage_", 0) == 0) {
            try {
                rank = std::stoi(stem.substr(6));
            } catch (const std::exception&) {
                continue;
            }
        } else {
            continue;
        }
        if (!best || rank > best->first) best = std::make_pair(rank, entry.path());
    }
    if (!best) return std::nullopt;
    try {
        return RunState::from_json(json::parse(read_file(best->second)));
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what(), best->second.string());
    }
}

void Pipeline::write_plan_artifacts(const RunState& state) const {
    write_file(config_.out_dir / "outline.json", pretty(outline_to_json(state.outline)));
    write_file(config_.out_dir / "plan.json", pretty(plan_to_json(state.plan)));
    write_file(config_.out_dir / "plan_history.json", pretty(json{{"schema_version", 1}, {"plans", state.plan_history}}));
}

RunState Pipeline::initialize() {
    RunState state;
    state.spec = config_.spec;
    auto report = as_stage("retrieval", [&] {
        return survey_level_retrieve(config_.spec, config_.retrieval, providers_, state.store);
    });
    state.survey_retrieval = report.to_json();
    log_.event("retrieval", state.survey_retrieval);
    log_calls("retrieval");
    if (state.store.empty()) throw StageError("retrieval", "no papers found for the topic");

    auto planning = plan_survey(state.store, config_.spec, providers_);
    state.outline = planning.outline;
    state.plan = planning.plan;
    check_plan_invariants(state.plan);
    json removed = json::array();
    for (const auto& [u, v] : planning.dag.removed) removed.push_back({u, v});
    state.plan_history.push_back({{"after_stage", -1}, {"plan", plan_to_json(state.plan)}});
    log_.event("planning", {{"subsections", state.outline.subsection_count()},
                            {"max_stage", state.plan.max_stage()},
                            {"dropped_abstracts", planning.context.dropped_abstracts},
                            {"removed_edges", removed}});
    log_calls("planning");
    write_checkpoint(state, "planning");
    return state;
}

void Pipeline::run_stage(RunState& state, const StageSet& set) {
    log_.event("stage_start", {{"stage", set.stage}, {"subsections", set.ids}});
    const StructureMemory snapshot = state.memory;
    const auto options = writer_options(state);
    const std::size_t n = set.ids.size();

    std::vector<SubsectionTask> tasks;
    for (const auto& id : set.ids) {
        const auto* e = state.plan.find(id);
        const auto* sec = state.outline.section_of(id);
        if (!e || !sec) throw PreconditionError("run_stage: " + id + " is not in the plan and outline");
        tasks.push_back({id, sec->title, sec->description, e->title, e->description, e->retrieval});
    }

    std::vector<PaperStore> stores(n, state.store);
    std::vector<std::optional<SubsectionResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::vector<Diagnostics> diags(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                Providers local{providers_.llm, providers_.embedder, providers_.reranker, providers_.scholarly, diags[i]};
                results[i] = write_subsection(tasks[i], snapshot, stores[i], local, options);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(config_.parallelism, n); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& w : diags[i].warnings()) providers_.diagnostics.warn(w.component, w.message);
        if (errors[i]) {
            log_.event("subsection_failed", {{"subsection_id", set.ids[i]}});
            try {
                std::rethrow_exception(errors[i]);
            } catch (const StageError&) {
                throw;
            } catch (const ProviderError& e) {
                throw StageError("writer [" + set.ids[i] + "]", e.what(), true);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = *results[i];
        auto merge = merge_store(state.store, stores[i]);
        apply_renames(r, merge.renamed);
        state.texts[r.id] = r.text;
        state.sidecars[r.id] = r.sidecar();
        state.memory = update_memory(state.memory, r.id, r.text, providers_.llm, providers_.diagnostics);
        state.completed.insert(r.id);
        json renamed = merge.renamed;
        log_.event("subsection_written", {{"subsection_id", r.id},
                                          {"stage", set.stage},
                                          {"candidates", r.candidates},
                                          {"selected", r.selection.index},
                                          {"passages", r.passages.size()},
                                          {"traced", r.traced.size()},
                                          {"unresolved", r.misses.size()},
                                          {"renamed_bibkeys", renamed}});
    }
    state.current_stage = set.stage;
    log_calls("stage " + std::to_string(set.stage));
}

void Pipeline::revise(RunState& state) {
    auto ids = state.outline.subsection_ids();
    if (std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return state.completed.count(id) > 0; })) return;
    auto actions = as_stage("replanner", [&] {
        return propose_revisions(state.outline, state.memory, state.completed, providers_.llm, providers_.diagnostics);
    });
    json proposed = json::array();
    for (const auto& a : actions) proposed.push_back(a.to_json());
    log_.event("revision_proposed", {{"after_stage", state.current_stage}, {"actions", proposed}});
    if (actions.empty()) return;
    std::set<std::string> retired;
    for (const auto& h : state.plan_history) {
        for (const auto& e : h.at("plan").at("plan")) retired.insert(e.value("subsection_id", ""));
    }
    auto outcome = apply_revisions(state.outline, actions, providers_.diagnostics, retired);
    json applied = json::array();
    json dropped = json::array();
    for (const auto& a : outcome.applied) applied.push_back(a.to_json());
    for (const auto& a : outcome.dropped) dropped.push_back(a.to_json());
    if (outcome.applied.empty()) {
        log_.event("revision_applied", {{"applied", applied}, {"dropped", dropped}});
        return;
    }
    auto build = as_stage("replanner", [&] {
        return replan(outcome.outline, state.completed, state.plan, state.current_stage, providers_);
    });
    state.outline = outcome.outline;
    state.plan = build.plan;
    state.plan_history.push_back({{"after_stage", state.current_stage}, {"plan", plan_to_json(state.plan)}});
    log_.event("revision_applied", {{"applied", applied}, {"dropped", dropped}, {"plan", plan_to_json(state.plan)}});
    log_calls("replanning after stage " + std::to_string(state.current_stage));
}

RunResult Pipeline::run(std::optional<RunState> resume) {
    json logged = config_.to_json();
    log_.event(resume ? "resume" : "start", {{"config", logged}});
    RunResult result;
    if (resume) {
        result.state = std::move(*resume);
        last_counts_ = providers_.llm.call_counts();
    } else {
        result.state = initialize();
    }
    auto& state = result.state;
    write_plan_artifacts(state);

    std::size_t warned = 0;
    auto flush_warnings = [&] {
        auto all = providers_.diagnostics.warnings();
        for (; warned < all.size(); ++warned) {
            log_.event("warning", {{"component", all[warned].component}, {"message", all[warned].message}});
        }
    };
    flush_warnings();

    while (auto set = next_stage(state)) {
        if (set->stage <= state.current_stage)
            throw StageError("controller", "stage " + std::to_string(set->stage) + " was scheduled after stage " +
                                               std::to_string(state.current_stage));
        run_stage(state, *set);
        revise(state);
        flush_warnings();
        write_checkpoint(state, "stage_" + std::to_string(set->stage));
        write_plan_artifacts(state);
        if (config_.crash_after_stage && *config_.crash_after_stage == set->stage) {
            throw StageError("controller", "simulated crash after stage " + std::to_string(set->stage));
        }
    }

    if (config_.final_refine) {
        result.refine = final_refine(state.outline, state.texts, state.memory, providers_.llm, providers_.diagnostics);
        log_.event("final_refine", result.refine->to_json());
        log_calls("final refinement");
    }
    if (config_.tables) {
        result.tables = dispatch_tables(state, providers_, config_.chunking);
        json made = json::array();
        for (const auto& [id, t] : result.tables) made.push_back({{"subsection_id", id}, {"kind", to_string(t.kind)}});
        log_.event("tables", {{"tables", made}});
        log_calls("tables");
    }
    result.document = assemble_document(state, result.tables);

    const auto& out = config_.out_dir;
    const auto markdown = render_markdown(result.document, state.store);
    write_file(out / "survey.md", markdown);
    write_file(out / "survey.tex", render_latex(result.document, state.store, "references"));
    write_file(out / "references.bib", compile_bibtex(state.store, result.document.cited()));
    save_csv(state.store, out / "papers.csv");
    write_file(out / "memory.json", pretty(state.memory.to_json()));
    write_file(out / "retrieval.json", pretty(state.survey_retrieval));
    for (const auto& [id, sc] : state.sidecars) write_file(out / "sidecars" / (id + ".json"), pretty(sc));
    for (const auto& [id, t] : result.tables) write_file(out / "tables" / (id + ".json"), pretty(t.to_json()));
    write_plan_artifacts(state);

    Diagnostics eval_diag;
    auto stats = analyze_document(parse_document(markdown), eval_diag);
    result.metrics = compute_metrics(stats, config_.k_list, config_.effective_reference_year());
    json metrics = result.metrics.to_json();
    if (config_.judge) {
        try {
            result.judge = judge_quality(markdown, providers_.llm, providers_.diagnostics);
            metrics["judge"] = result.judge->to_json();
        } catch (const ProviderError& e) {
            providers_.diagnostics.warn("evaluation", std::string("judge unavailable: ") + e.what());
        }
        log_calls("judge");
    }
    write_file(out / "metrics.json", pretty(metrics));
    write_file(out / "metrics.md", render_comparison_table({{"this run", result.metrics, result.judge}}, config_.k_list));
    flush_warnings();
    log_.event("done", {{"subsections", state.completed.size()},
                        {"cited", result.document.cited().size()},
                        {"tables", result.tables.size()}});
    return result;
}

}  // namespace tracewrite
