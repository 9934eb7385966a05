#include "tracewrite/tables.hpp"

#include "tracewrite/citations.hpp"

#include <algorithm>

namespace tracewrite {

namespace {

json paper_brief(const PaperRecord& p) {
    return {{"bibkey", p.bibkey}, {"title", p.title}, {"abstract", p.abstract}};
}

json papers_brief(const std::vector<PaperRecord>& papers) {
    json out = json::array();
    for (const auto& p : papers) out.push_back(paper_brief(p));
    return out;
}

std::string first_words(const std::string& s, std::size_t n) {
    auto words = split(s, ' ');
    if (words.size() > n) words.resize(n);
    return join(words, " ");
}

/// Passages of one paper for a query: dense top 3 within the paper,
/// reranked, best 2 kept.
std::vector<std::string> evidence_for(const std::string& query, const std::string& bibkey, const VectorIndex& index,
                                      Providers& providers) {
    if (index.empty()) return {};
    auto q = providers.embedder.embed({query}).front();
    auto hits = index.search(q, 3, {bibkey});
    if (hits.empty()) return {};
    std::vector<std::string> docs;
    for (const auto& h : hits) docs.push_back(index.entries()[h.entry].text);
    auto scores = providers.reranker.score(query, docs);
    if (scores.size() != docs.size()) throw ProviderError("reranker returned a score count that does not match the input");
    std::vector<std::size_t> order(docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < order.size() && out.size() < 2; ++i) out.push_back(docs[order[i]]);
    return out;
}

bool is_others(const std::string& c) { return to_lower(trim(c)) == "others" || to_lower(trim(c)) == "other"; }

std::vector<std::string> unique_trimmed(const json& arr, std::size_t limit) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& v : arr) {
        auto s = trim(v.get<std::string>());
        if (s.empty() || !seen.insert(to_lower(s)).second) continue;
        if (out.size() == limit) break;
        out.push_back(s);
    }
    return out;
}

std::string cite(const std::string& bibkey) { return "\\cite{" + bibkey + "}"; }

}  // namespace

std::string to_string(TableKind kind) { return kind == TableKind::Aggregation ? "aggregation" : "aspect"; }

void GeneratedTable::validate(const PaperStore& store) const {
    if (columns.size() < 2) throw Error("table " + subsection_id + " has too few columns");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != columns.size())
            throw Error("table " + subsection_id + " row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                        " cells for " + std::to_string(columns.size()) + " columns");
    }
    const auto data_columns = columns.size() - 1;
    if (kind == TableKind::Aggregation && (data_columns < 2 || data_columns > 6))
        throw Error("aggregation table " + subsection_id + " has " + std::to_string(data_columns) + " categories");
    if (kind == TableKind::Aspect && (data_columns < 3 || data_columns > 5))
        throw Error("aspect table " + subsection_id + " has " + std::to_string(data_columns) + " aspects");
    std::set<std::string> in_cells;
    for (const auto& r : rows) {
        for (const auto& c : r) {
            for (const auto& k : cite_keys(c)) in_cells.insert(k);
        }
    }
    if (in_cells != cited) throw Error("table " + subsection_id + " cited set does not match its cells");
    for (const auto& k : cited) {
        if (!store.contains(k)) throw UnknownBibkey(k);
    }
}

json GeneratedTable::to_json() const {
    json j{{"schema_version", 1},
           {"subsection_id", subsection_id},
           {"kind", to_string(kind)},
           {"caption", caption},
           {"columns", columns},
           {"rows", rows},
           {"cited", cited}};
    if (!core_aspect.empty()) j["core_aspect"] = core_aspect;
    return j;
}

GeneratedTable GeneratedTable::from_json(const json& j) {
    GeneratedTable t;
    t.kind = j.at("kind").get<std::string>() == "aggregation" ? TableKind::Aggregation : TableKind::Aspect;
    t.subsection_id = j.value("subsection_id", "");
    t.caption = j.value("caption", "");
    t.core_aspect = j.value("core_aspect", "");
    t.columns = j.at("columns").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    t.cited = j.value("cited", std::set<std::string>{});
    return t;
}

TableKind decide_table_kind(std::size_t paper_count) {
    if (paper_count == 0) throw PreconditionError("decide_table_kind: no papers");
    return paper_count >= kAggregationThreshold ? TableKind::Aggregation : TableKind::Aspect;
}

std::vector<std::string> prune_categories(const std::vector<std::string>& categories,
                                          const std::map<std::string, std::vector<std::string>>& members) {
    std::vector<std::string> out;
    for (const auto& c : categories) {
        if (is_others(c)) continue;
        auto it = members.find(c);
        if (it != members.end() && it->second.size() >= 2) out.push_back(c);
    }
    return out;
}

GeneratedTable build_aggregation_table(const TableRequest& request, const VectorIndex& index, Providers& providers) {
    if (request.papers.size() < kAggregationThreshold)
        throw PreconditionError("build_aggregation_table: needs at least 10 papers");
    auto& llm = providers.llm;
    auto& diag = providers.diagnostics;
    const auto brief = papers_brief(request.papers).dump();
    auto aspect = trim(llm.complete_structured({PromptRole::TableCoreAspect,
                                                {{"title", request.title},
                                                 {"description", request.description},
                                                 {"papers", brief}}})
                           .value.at("aspect")
                           .get<std::string>());
    if (aspect.empty()) aspect = "approach";

    // Evidence does not depend on the categories, so it is fetched once.
    std::vector<std::string> evidence;
    for (const auto& p : request.papers) {
        evidence.push_back(join(evidence_for(p.title + ". " + first_words(p.abstract, 30), p.bibkey, index, providers), "\n\n"));
    }

    StructuredPrompt propose{PromptRole::TableCategories,
                             {{"title", request.title},
                              {"aspect", aspect},
                              {"subsection_text", request.subsection_text},
                              {"papers", brief}}};
    for (int round = 0; round < 2; ++round) {
        auto proposed = unique_trimmed(llm.complete_structured(propose).value.at("categories"), 7);
        std::vector<std::string> categories;
        for (const auto& c : proposed) {
            if (!is_others(c) && categories.size() < 6) categories.push_back(c);
        }
        std::vector<std::string> offered = categories;
        offered.push_back("Others");

        std::map<std::string, std::vector<std::string>> members;
        std::map<std::string, std::set<std::string>> assigned;
        for (std::size_t i = 0; i < request.papers.size(); ++i) {
            const auto& p = request.papers[i];
            try {
                auto reply = llm.complete_structured({PromptRole::TableClassify,
                                                      {{"categories", json(offered).dump()},
                                                       {"paper", paper_brief(p).dump()},
                                                       {"evidence", evidence[i]}}});
                for (const auto& c : reply.value.at("categories")) {
                    auto name = trim(c.get<std::string>());
                    auto hit = std::find_if(offered.begin(), offered.end(),
                                            [&](const std::string& o) { return to_lower(o) == to_lower(name); });
                    if (hit == offered.end()) continue;
                    if (assigned[p.bibkey].insert(*hit).second) members[*hit].push_back(p.bibkey);
                }
            } catch (const ProviderError& e) {
                diag.warn("tables", "classification of " + p.bibkey + " failed, paper left out: " + e.what());
            }
        }
        auto surviving = prune_categories(categories, members);
        if (surviving.size() >= 2) {
            GeneratedTable t;
            t.kind = TableKind::Aggregation;
            t.subsection_id = request.subsection_id;
            t.core_aspect = aspect;
            t.caption = "Works on " + request.title + " grouped by " + aspect + ".";
            t.columns.push_back("Paper");
            for (const auto& c : surviving) t.columns.push_back(c);
            for (const auto& p : request.papers) {
                std::vector<std::string> row{cite(p.bibkey)};
                bool any = false;
                for (const auto& c : surviving) {
                    bool in = assigned[p.bibkey].count(c) > 0;
                    any = any || in;
                    row.push_back(in ? kMarked : "");
                }
                if (!any) continue;
                t.cited.insert(p.bibkey);
                t.rows.push_back(std::move(row));
            }
            return t;
        }
        diag.warn("tables", "only " + std::to_string(surviving.size()) + " categories survived pruning for " +
                                request.subsection_id + (round == 0 ? ", proposing again" : ""));
        propose.slots["feedback"] =
            "The previous categories left fewer than two groups with at least two papers each. Propose broader categories.";
    }
    diag.warn("tables", "falling back to an aspect table for " + request.subsection_id);
    TableRequest fallback = request;
    if (fallback.papers.size() >= kAggregationThreshold) fallback.papers.resize(kAggregationThreshold - 1);
    return build_aspect_table(fallback, index, providers);
}

GeneratedTable build_aspect_table(const TableRequest& request, const VectorIndex& index, Providers& providers) {
    if (request.papers.empty()) throw PreconditionError("build_aspect_table: no papers");
    auto& llm = providers.llm;
    auto& diag = providers.diagnostics;
    StructuredPrompt ask{PromptRole::TableAspects,
                         {{"title", request.title},
                          {"description", request.description},
                          {"subsection_text", request.subsection_text},
                          {"papers", papers_brief(request.papers).dump()}}};
    std::vector<std::string> aspects;
    std::string raw;
    for (int round = 0; round < 2; ++round) {
        auto reply = llm.complete_structured(ask);
        raw = reply.raw;
        aspects = unique_trimmed(reply.value.at("aspects"), 5);
        if (aspects.size() >= 3) break;
        ask.slots["feedback"] = "Select between 3 and 5 distinct aspects.";
    }
    if (aspects.size() < 3) throw SchemaViolation("fewer than 3 table aspects", raw);

    GeneratedTable t;
    t.kind = TableKind::Aspect;
    t.subsection_id = request.subsection_id;
    t.caption = "Comparison of works on " + request.title + ".";
    t.columns.push_back("Paper");
    for (const auto& a : aspects) t.columns.push_back(a);
    for (const auto& p : request.papers) {
        std::vector<std::string> row{cite(p.bibkey)};
        for (const auto& a : aspects) {
            std::string value = kNotReported;
            try {
                auto evidence = evidence_for(a + " " + p.title, p.bibkey, index, providers);
                if (!evidence.empty()) {
                    auto reply = llm.complete_structured({PromptRole::TableCellSummary,
                                                          {{"aspect", a},
                                                           {"paper", paper_brief(p).dump()},
                                                           {"evidence", join(evidence, "\n\n")}}});
                    auto v = trim(strip_cites(reply.value.at("value").get<std::string>()));
                    if (!v.empty()) value = v;
                }
            } catch (const ProviderError& e) {
                diag.warn("tables", "cell (" + p.bibkey + ", " + a + ") not reported: " + e.what());
            }
            row.push_back(value);
        }
        t.cited.insert(p.bibkey);
        t.rows.push_back(std::move(row));
    }
    return t;
}

GeneratedTable build_table(const TableRequest& request, const VectorIndex& index, Providers& providers) {
    if (decide_table_kind(request.papers.size()) == TableKind::Aggregation) {
        return build_aggregation_table(request, index, providers);
    }
    return build_aspect_table(request, index, providers);
}

}  // namespace tracewrite
