#include "tracewrite/writer.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace tracewrite {

std::vector<Passage> build_rag_context(const std::string& query, const VectorIndex& index,
                                       const std::vector<std::set<std::string>>& sources,
                                       EmbeddingProvider& embedder, RerankProvider& reranker,
                                       Diagnostics& diagnostics, const RagOptions& options) {
    if (index.empty()) {
        diagnostics.warn("writer", "empty index, no passages for \"" + query + "\"");
        return {};
    }
    auto q = embedder.embed({query}).front();
    std::vector<std::size_t> candidates;
    std::set<std::size_t> seen;
    for (const auto& source : sources) {
        if (source.empty()) continue;
        for (const auto& hit : index.search(q, options.dense_k, source)) {
            if (seen.insert(hit.entry).second) candidates.push_back(hit.entry);
        }
    }
    if (candidates.empty()) return {};
    std::vector<std::string> docs;
    for (auto c : candidates) docs.push_back(index.entries()[c].text);
    auto scores = reranker.score(query, docs);
    if (scores.size() != docs.size()) throw ProviderError("reranker returned a score count that does not match the input");
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<Passage> out;
    for (std::size_t i = 0; i < order.size() && out.size() < options.top_n; ++i) {
        const auto& e = index.entries()[candidates[order[i]]];
        out.push_back({e.text, e.bibkey, e.key, scores[order[i]]});
    }
    return out;
}

std::vector<TraceAssessment> assess_traceworthiness(const std::vector<CitationMarker>& markers,
                                                    const std::string& title, const std::string& description,
                                                    const std::string& passage, LlmClient& llm,
                                                    Diagnostics& diagnostics) {
    std::vector<TraceAssessment> out;
    for (const auto& m : markers) out.push_back({m, false, ""});
    if (markers.empty()) return out;
    json surfaces = json::array();
    for (const auto& m : markers) surfaces.push_back(m.surface);
    try {
        auto reply = llm.complete_structured({PromptRole::Traceworthiness,
                                              {{"title", title},
                                               {"description", description},
                                               {"passage", passage},
                                               {"markers", surfaces.dump()}}});
        std::map<std::string, const json*> by_surface;
        for (const auto& a : reply.value.at("assessments")) by_surface.emplace(a.at("marker").get<std::string>(), &a);
        for (auto& a : out) {
            auto it = by_surface.find(a.marker.surface);
            if (it == by_surface.end()) {
                a.explanation = "no assessment returned";
                continue;
            }
            const auto& j = *it->second;
            a.traceworthy = j.at("traceworthy").is_boolean() && j.at("traceworthy").get<bool>();
            a.explanation = j.value("explanation", "");
        }
    } catch (const ProviderError& e) {
        diagnostics.warn("writer", std::string("traceworthiness assessment failed: ") + e.what());
        for (auto& a : out) a.explanation = "assessment unavailable";
    }
    return out;
}

std::set<std::string> EnrichedContext::citable() const {
    std::set<std::string> keys;
    for (const auto& p : base_passages) keys.insert(p.bibkey);
    for (const auto& t : traced) keys.insert(t.bibkey);
    return keys;
}

json EnrichedContext::prompt_json() const {
    json ps = json::array();
    for (const auto& p : base_passages) ps.push_back({{"bibkey", p.bibkey}, {"text", p.text}});
    json ts = json::array();
    for (const auto& t : traced) {
        ts.push_back({{"bibkey", t.bibkey},
                      {"title", t.title},
                      {"abstract", t.abstract},
                      {"passage_index", t.passage_index},
                      {"marker", t.marker}});
    }
    return {{"passages", ps}, {"traced", ts}};
}

std::optional<std::string> marker_reference_text(const CitationMarker& marker, const PaperRecord& source) {
    if (marker.kind == MarkerKind::AuthorYear) {
        auto s = trim(marker.surface);
        if (!s.empty() && s.front() == '(' && s.back() == ')') s = trim(s.substr(1, s.size() - 2));
        return s;
    }
    if (!source.full_text) return std::nullopt;
    const std::string tag = "[" + marker.surface + "]";
    for (const auto& line : split(*source.full_text, '\n')) {
        auto t = trim(line);
        if (t.rfind(tag, 0) == 0) {
            auto rest = trim(t.substr(tag.size()));
            if (!rest.empty()) return rest;
        }
    }
    return std::nullopt;
}

EnrichResult enrich_context(const std::vector<Passage>& rag, const std::vector<std::vector<TraceAssessment>>& assessments,
                            ScholarlyProvider& scholarly, PaperStore& store, Diagnostics& diagnostics) {
    if (assessments.size() != rag.size()) throw PreconditionError("enrich_context: one assessment list per passage");
    EnrichResult out;
    out.context.base_passages = rag;
    std::map<std::string, std::optional<std::string>> resolved;  // reference text -> bibkey
    std::set<std::pair<std::string, std::size_t>> links;
    for (std::size_t i = 0; i < rag.size(); ++i) {
        for (const auto& a : assessments[i]) {
            if (!a.traceworthy) continue;
            const PaperRecord* source = store.contains(rag[i].bibkey) ? &store.at(rag[i].bibkey) : nullptr;
            auto ref = source ? marker_reference_text(a.marker, *source) : std::nullopt;
            if (!ref) {
                out.misses.push_back({a.marker.surface, i, "no reference entry for the marker"});
                diagnostics.warn("tracing", "cannot resolve " + a.marker.surface + ": no reference entry");
                continue;
            }
            auto key = normalize_title(*ref);
            if (!resolved.count(key)) {
                std::optional<std::string> bibkey;
                try {
                    if (auto rec = scholarly.resolve_citation(*ref)) {
                        bibkey = upsert(store, {*rec}, provenance::kTraced).front();
                    }
                } catch (const ProviderError& e) {
                    diagnostics.warn("tracing", "resolution of \"" + *ref + "\" failed: " + e.what());
                }
                resolved[key] = bibkey;
            }
            const auto& bk = resolved[key];
            if (!bk) {
                out.misses.push_back({a.marker.surface, i, "no confident match for \"" + *ref + "\""});
                diagnostics.warn("tracing", "unresolved traceworthy marker " + a.marker.surface);
                continue;
            }
            if (!links.insert({*bk, i}).second) continue;
            const auto& rec = store.at(*bk);
            out.context.traced.push_back({*bk, rec.title, rec.abstract, i, a.marker.surface});
        }
    }
    return out;
}

json Skeleton::to_json() const { return {{"points", points}, {"terminology", terminology}}; }

Skeleton make_skeleton(const std::string& title, const std::string& description, const StructureMemory& memory,
                       const EnrichedContext& context, LlmClient& llm) {
    StructuredPrompt prompt{PromptRole::Skeleton,
                            {{"title", title},
                             {"description", description},
                             {"memory", memory.prompt_json().dump()},
                             {"context", context.prompt_json().dump()}}};
    std::string raw;
    for (int round = 0; round < 2; ++round) {
        auto reply = llm.complete_structured(prompt);
        raw = reply.raw;
        Skeleton s;
        for (const auto& p : reply.value.at("points")) {
            auto t = trim(p.get<std::string>());
            if (!t.empty() && s.points.size() < 10) s.points.push_back(t);
        }
        for (const auto& t : reply.value.value("terminology", json::array())) {
            auto term = trim(t.get<std::string>());
            if (memory.has_term(term) &&
                std::none_of(s.terminology.begin(), s.terminology.end(),
                             [&](const std::string& x) { return to_lower(x) == to_lower(term); })) {
                s.terminology.push_back(term);
            }
        }
        if (s.points.size() >= 3) return s;
        prompt.slots["feedback"] = "The skeleton needs between 3 and 10 non-empty points.";
    }
    throw SchemaViolation("skeleton has fewer than 3 points", raw);
}

std::set<std::string> unknown_citations(const std::string& text, const std::set<std::string>& allowed) {
    std::set<std::string> out;
    for (const auto& k : cite_keys(text)) {
        if (!allowed.count(k)) out.insert(k);
    }
    return out;
}

std::vector<std::string> write_candidates(const std::string& title, const std::string& description,
                                          const Skeleton& skeleton, const EnrichedContext& context,
                                          std::size_t n, std::size_t word_budget, LlmClient& llm,
                                          Diagnostics& diagnostics) {
    if (n == 0) throw PreconditionError("write_candidates: N must be at least 1");
    const auto allowed = context.citable();
    std::vector<std::string> drafts;
    for (std::size_t k = 0; k < n; ++k) {
        StructuredPrompt prompt{PromptRole::SubsectionWrite,
                                {{"title", title},
                                 {"description", description},
                                 {"skeleton", skeleton.to_json().dump()},
                                 {"context", context.prompt_json().dump()},
                                 {"candidate_index", std::to_string(k)},
                                 {"word_budget", std::to_string(word_budget)}}};
        auto text = trim(llm.complete_structured(prompt).value.at("text").get<std::string>());
        auto unknown = unknown_citations(text, allowed);
        if (!unknown.empty()) {
            prompt.slots["feedback"] = "Your draft cited keys that are not in the context (" +
                                       join({unknown.begin(), unknown.end()}, ", ") +
                                       "). Cite only these keys: " + join({allowed.begin(), allowed.end()}, ", ") + ".";
            text = trim(llm.complete_structured(prompt).value.at("text").get<std::string>());
            unknown = unknown_citations(text, allowed);
        }
        if (!unknown.empty()) {
            diagnostics.warn("writer", "draft " + std::to_string(k) + " for \"" + title + "\" discarded: cites unknown " +
                                           join({unknown.begin(), unknown.end()}, ", "));
            continue;
        }
        if (text.empty()) {
            diagnostics.warn("writer", "draft " + std::to_string(k) + " for \"" + title + "\" is empty");
            continue;
        }
        drafts.push_back(std::move(text));
    }
    if (drafts.empty()) throw StageError("writer/draft", "no usable draft for \"" + title + "\"");
    return drafts;
}

Selection select_best(const std::string& title, const Skeleton& skeleton, const std::vector<std::string>& drafts,
                      LlmClient& llm, Diagnostics& diagnostics) {
    if (drafts.empty()) throw PreconditionError("select_best: no drafts");
    if (drafts.size() == 1) return {0, "single candidate"};
    auto reply = llm.complete_structured({PromptRole::DraftSelect,
                                          {{"title", title},
                                           {"skeleton", skeleton.to_json().dump()},
                                           {"drafts", json(drafts).dump()}}});
    Selection s;
    s.justification = reply.value.value("justification", "");
    const auto& bi = reply.value.at("best_index");
    long long pick = bi.is_number_integer() ? bi.get<long long>() : -1;
    if (pick < 0 || static_cast<std::size_t>(pick) >= drafts.size()) {
        diagnostics.warn("writer", "draft selection index out of range for \"" + title + "\", using 0");
        pick = 0;
    }
    s.index = static_cast<std::size_t>(pick);
    for (std::size_t i = 0; i < s.index; ++i) {
        if (drafts[i] == drafts[s.index]) {
            s.index = i;
            break;
        }
    }
    return s;
}

RefineResult refine_subsection(const std::string& title, const std::string& draft, const Skeleton& skeleton,
                               const EnrichedContext& context, LlmClient& llm, Diagnostics& diagnostics) {
    RefineResult out;
    out.text = draft;
    const auto allowed = context.citable();
    for (const char* pass : {"structure", "citation", "polish"}) {
        PassReport report{pass, false, ""};
        try {
            auto reply = llm.complete_structured({PromptRole::Refinement,
                                                  {{"pass", pass},
                                                   {"title", title},
                                                   {"text", out.text},
                                                   {"skeleton", skeleton.to_json().dump()},
                                                   {"context", context.prompt_json().dump()}}});
            auto text = trim(reply.value.at("text").get<std::string>());
            std::vector<std::string> claims;
            for (const auto& c : reply.value.value("claim_sentences", json::array())) claims.push_back(c.get<std::string>());
            const auto before = cite_key_set(out.text);
            const auto after = cite_key_set(text);
            if (text.empty()) {
                report.note = "empty output";
            } else if (auto unknown = unknown_citations(text, allowed); !unknown.empty()) {
                report.note = "cites unknown keys " + join({unknown.begin(), unknown.end()}, ", ");
            } else if (!std::includes(after.begin(), after.end(), before.begin(), before.end())) {
                report.note = "dropped existing citations";
            } else if (std::any_of(claims.begin(), claims.end(),
                                   [](const std::string& c) { return cite_keys(c).empty(); })) {
                report.note = "a flagged claim sentence carries no citation";
            } else {
                out.text = std::move(text);
                if (std::string(pass) == "citation") out.claim_sentences = std::move(claims);
                report.applied = true;
            }
        } catch (const ProviderError& e) {
            report.note = e.what();
        }
        if (!report.applied) {
            diagnostics.warn("writer", std::string(pass) + " pass for \"" + title + "\" kept previous text: " + report.note);
        }
        out.passes.push_back(std::move(report));
    }
    return out;
}

// ---------------------------------------------------------------------------

json SubsectionResult::sidecar() const {
    json ps = json::array();
    for (std::size_t i = 0; i < passages.size(); ++i) {
        json ms = json::array();
        if (i < assessments.size()) {
            for (const auto& a : assessments[i]) {
                ms.push_back({{"surface", a.marker.surface},
                              {"kind", to_string(a.marker.kind)},
                              {"begin", a.marker.begin},
                              {"end", a.marker.end},
                              {"traceworthy", a.traceworthy},
                              {"explanation", a.explanation}});
            }
        }
        ps.push_back({{"bibkey", passages[i].bibkey},
                      {"entry", passages[i].entry_key},
                      {"rerank_score", passages[i].rerank_score},
                      {"markers", ms}});
    }
    json ts = json::array();
    for (const auto& t : traced) {
        ts.push_back({{"bibkey", t.bibkey}, {"title", t.title}, {"passage_index", t.passage_index}, {"marker", t.marker}});
    }
    json miss = json::array();
    for (const auto& m : misses) miss.push_back({{"marker", m.marker}, {"passage_index", m.passage_index}, {"reason", m.reason}});
    json pr = json::array();
    for (const auto& p : passes) pr.push_back({{"pass", p.pass}, {"applied", p.applied}, {"note", p.note}});
    return {{"schema_version", 1},
            {"subsection_id", id},
            {"subsection_bibkeys", subsection_bibkeys},
            {"passages", ps},
            {"traced", ts},
            {"unresolved", miss},
            {"skeleton", skeleton.to_json()},
            {"candidates", candidates},
            {"selection", {{"index", selection.index}, {"justification", selection.justification}}},
            {"refinement", pr}};
}

SubsectionResult write_subsection(const SubsectionTask& task, const StructureMemory& memory, PaperStore& store,
                                  Providers& providers, const WriterOptions& options) {
    SubsectionResult r;
    r.id = task.id;
    auto& diag = providers.diagnostics;
    auto guard = [&](const char* stage, auto&& fn) {
        try {
            fn();
        } catch (const StageError&) {
            throw;
        } catch (const ProviderError& e) {
            throw StageError(std::string(stage) + " [" + task.id + "]", e.what(), true);
        }
    };

    if (task.retrieval) {
        guard("writer/retrieval", [&] {
            SubsectionQuery q{task.id, task.section_title, task.section_description, task.title, task.description};
            r.subsection_bibkeys = subsection_retrieve(q, options.retrieval, providers, store).bibkeys;
        });
    }
    auto survey = store.keys_with_tag(provenance::kSurveyLevel);
    auto local = store.keys_with_tag(provenance::subsection(task.id));
    std::set<std::string> survey_set(survey.begin(), survey.end());
    std::set<std::string> local_set(local.begin(), local.end());
    std::set<std::string> all = survey_set;
    all.insert(local_set.begin(), local_set.end());
    if (all.empty()) throw StageError("writer/context [" + task.id + "]", "no papers to write from");

    guard("writer/context", [&] {
        auto index = build_index(store, providers.embedder, options.chunking, all);
        r.passages = build_rag_context(task.title + ". " + task.description, index, {survey_set, local_set},
                                       providers.embedder, providers.reranker, diag, options.rag);
    });
    if (r.passages.empty()) throw StageError("writer/context [" + task.id + "]", "no passages retrieved");

    EnrichResult enriched;
    guard("writer/tracing", [&] {
        for (std::size_t i = 0; i < r.passages.size(); ++i) {
            auto markers = detect_markers(r.passages[i].text);
            for (auto& m : markers) m.passage = i;
            r.assessments.push_back(
                assess_traceworthiness(markers, task.title, task.description, r.passages[i].text, providers.llm, diag));
        }
        enriched = enrich_context(r.passages, r.assessments, providers.scholarly, store, diag);
    });
    r.traced = enriched.context.traced;
    r.misses = enriched.misses;

    guard("writer/draft", [&] {
        r.skeleton = make_skeleton(task.title, task.description, memory, enriched.context, providers.llm);
        auto drafts = write_candidates(task.title, task.description, r.skeleton, enriched.context,
                                       options.n_candidates, options.word_budget, providers.llm, diag);
        r.candidates = drafts.size();
        r.selection = select_best(task.title, r.skeleton, drafts, providers.llm, diag);
        auto refined = refine_subsection(task.title, drafts[r.selection.index], r.skeleton, enriched.context,
                                         providers.llm, diag);
        r.text = refined.text;
        r.passes = refined.passes;
    });
    return r;
}

}  // namespace tracewrite
