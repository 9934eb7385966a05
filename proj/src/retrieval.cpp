#include "tracewrite/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace tracewrite {

void TopicSpec::validate() const {
    if (trim(topic).empty()) throw PreconditionError("topic must not be empty");
}

std::string TopicSpec::query_text() const {
    auto d = trim(description);
    return d.empty() ? trim(topic) : trim(topic) + ". " + d;
}

void RetrievalConfig::validate() const {
    if (!(similarity_threshold >= -1.0 && similarity_threshold <= 1.0))
        throw ConfigError("similarity threshold must lie in [-1, 1]");
    if (!(relevance_threshold >= 0.0 && relevance_threshold <= 100.0))
        throw ConfigError("relevance threshold must lie in [0, 100]");
    if (fallback_top_n == 0) throw ConfigError("fallback_top_n must be at least 1");
    if (per_query_cap == 0) throw ConfigError("per_query_cap must be at least 1");
    if (search_limit == 0) throw ConfigError("search_limit must be at least 1");
    if (scoring_batch_size == 0) throw ConfigError("scoring_batch_size must be at least 1");
}

json RetrievalConfig::to_json() const {
    return {{"similarity_threshold", similarity_threshold},
            {"relevance_threshold", relevance_threshold},
            {"fallback_top_n", fallback_top_n},
            {"per_query_cap", per_query_cap},
            {"expansion_top_m", expansion_top_m},
            {"search_limit", search_limit},
            {"link_limit", link_limit},
            {"scoring_batch_size", scoring_batch_size},
            {"expansion_enabled", expansion_enabled}};
}

RetrievalConfig RetrievalConfig::from_json(const json& j) {
    RetrievalConfig c;
    c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
    c.relevance_threshold = j.value("relevance_threshold", c.relevance_threshold);
    c.fallback_top_n = j.value("fallback_top_n", c.fallback_top_n);
    c.per_query_cap = j.value("per_query_cap", c.per_query_cap);
    c.expansion_top_m = j.value("expansion_top_m", c.expansion_top_m);
    c.search_limit = j.value("search_limit", c.search_limit);
    c.link_limit = j.value("link_limit", c.link_limit);
    c.scoring_batch_size = j.value("scoring_batch_size", c.scoring_batch_size);
    c.expansion_enabled = j.value("expansion_enabled", c.expansion_enabled);
    return c;
}

json RetrievalReport::to_json() const {
    return {{"keywords", keywords},   {"searched", searched},         {"filtered", filtered},
            {"expanded", expanded},   {"expanded_kept", expanded_kept}, {"scored", scored},
            {"insufficient_corpus", insufficient_corpus}, {"bibkeys", bibkeys}};
}

// ---------------------------------------------------------------------------

std::vector<std::string> generate_keywords(const TopicSpec& spec, LlmClient& llm) {
    spec.validate();
    StructuredPrompt prompt{PromptRole::KeywordGen, {{"topic", spec.topic}, {"description", spec.description}}};
    for (int round = 0; round < 2; ++round) {
        auto reply = llm.complete_structured(prompt);
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& k : reply.value.at("keywords")) {
            auto t = trim(k.get<std::string>());
            if (t.empty() || !seen.insert(to_lower(t)).second) continue;
            out.push_back(t);
            if (out.size() == 10) break;
        }
        if (out.size() >= 3) return out;
    }
    throw SchemaViolation("keyword generation returned fewer than 3 usable keywords", "");
}

std::vector<Candidate> semantic_filter(const std::vector<PaperRecord>& candidates, const std::string& query,
                                       double threshold, EmbeddingProvider& embedder, Diagnostics& diagnostics) {
    if (trim(query).empty()) throw PreconditionError("semantic_filter: empty query");
    std::vector<std::string> texts{query};
    std::vector<std::size_t> embedded;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].has_abstract()) {
            texts.push_back(candidates[i].abstract);
            embedded.push_back(i);
        }
    }
    std::vector<std::optional<double>> cosines(candidates.size());
    if (!embedded.empty()) {
        auto vecs = embedder.embed(texts);
        for (std::size_t j = 0; j < embedded.size(); ++j) cosines[embedded[j]] = cosine_similarity(vecs[0], vecs[j + 1]);
    }
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!candidates[i].has_abstract()) {
            diagnostics.warn("retrieval", "no abstract, bypassing similarity filter: " + candidates[i].title);
            out.push_back({candidates[i], std::nullopt});
        } else if (*cosines[i] >= threshold) {
            out.push_back({candidates[i], cosines[i]});
        }
    }
    return out;
}

std::vector<PaperRecord> expand_citations(const std::vector<PaperRecord>& seeds, ScholarlyProvider& scholarly,
                                          std::size_t link_limit, Diagnostics& diagnostics) {
    if (seeds.empty()) throw PreconditionError("expand_citations: no seeds");
    std::set<std::string> seed_ids;
    for (const auto& s : seeds) seed_ids.insert(s.paper_id);
    std::set<std::string> seen;
    std::vector<PaperRecord> out;
    for (const auto& seed : seeds) {
        std::vector<PaperRecord> linked;
        try {
            linked = scholarly.get_linked_papers(seed.paper_id, LinkDirection::References, link_limit);
            auto cited_by = scholarly.get_linked_papers(seed.paper_id, LinkDirection::Citations, link_limit);
            linked.insert(linked.end(), cited_by.begin(), cited_by.end());
        } catch (const ProviderError& e) {
            diagnostics.warn("retrieval", "citation expansion skipped seed " + seed.paper_id + ": " + e.what());
            continue;
        }
        for (auto& p : linked) {
            if (seed_ids.count(p.paper_id) || !seen.insert(p.paper_id).second) continue;
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<PaperRecord> score_relevance(std::vector<PaperRecord> papers, const TopicSpec& spec, LlmClient& llm,
                                         Diagnostics& diagnostics, std::size_t batch_size) {
    if (papers.empty()) throw PreconditionError("score_relevance: no papers");
    if (batch_size == 0) batch_size = 1;
    for (std::size_t start = 0; start < papers.size(); start += batch_size) {
        const std::size_t end = std::min(papers.size(), start + batch_size);
        json batch = json::array();
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back({{"id", papers[i].paper_id}, {"title", papers[i].title}, {"abstract", papers[i].abstract}});
        }
        std::map<std::string, double> scores;
        try {
            StructuredPrompt prompt{PromptRole::RelevanceScore,
                                    {{"topic", spec.topic}, {"description", spec.description}, {"papers", batch.dump()}}};
            auto reply = llm.complete_structured(prompt);
            for (const auto& s : reply.value.at("scores")) {
                if (!s.at("score").is_number()) continue;
                scores[s.at("id").get<std::string>()] = s.at("score").get<double>();
            }
        } catch (const ProviderError& e) {
            diagnostics.warn("retrieval", std::string("relevance batch failed, scoring 0: ") + e.what());
        }
        for (std::size_t i = start; i < end; ++i) {
            auto it = scores.find(papers[i].paper_id);
            double s = 0.0;
            if (it == scores.end()) {
                if (!scores.empty()) diagnostics.warn("retrieval", "no relevance score returned for " + papers[i].paper_id);
            } else {
                s = it->second;
                if (!std::isfinite(s) || s < 0.0 || s > 100.0) {
                    diagnostics.warn("retrieval", "relevance score out of range for " + papers[i].paper_id + ", clamped");
                    s = std::isfinite(s) ? std::clamp(s, 0.0, 100.0) : 0.0;
                }
            }
            papers[i].relevance_score = s;
        }
    }
    return papers;
}

namespace {

std::string tie_key(const PaperRecord& p) {
    return p.bibkey.empty() ? make_bibkey_base(p) + "\x1f" + p.paper_id : p.bibkey;
}

bool ranks_before(const PaperRecord& a, const PaperRecord& b) {
    double sa = a.relevance_score.value_or(0.0);
    double sb = b.relevance_score.value_or(0.0);
    if (sa != sb) return sa > sb;
    int ya = a.year.value_or(-1);
    int yb = b.year.value_or(-1);
    if (ya != yb) return ya > yb;
    return tie_key(a) < tie_key(b);
}

void merge_unique(std::vector<PaperRecord>& into, std::set<std::string>& ids, std::vector<PaperRecord> from) {
    for (auto& p : from) {
        if (ids.insert(p.paper_id).second) into.push_back(std::move(p));
    }
}

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
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

std::vector<PaperRecord> select_final(std::vector<PaperRecord> papers, const RetrievalConfig& config) {
    std::stable_sort(papers.begin(), papers.end(), ranks_before);
    std::vector<PaperRecord> passing;
    for (const auto& p : papers) {
        if (p.relevance_score.value_or(0.0) >= config.relevance_threshold) passing.push_back(p);
    }
    if (passing.empty()) {
        papers.resize(std::min(papers.size(), std::min(config.fallback_top_n, config.per_query_cap)));
        return papers;
    }
    if (passing.size() > config.per_query_cap) passing.resize(config.per_query_cap);
    return passing;
}

RetrievalReport run_retrieval(const TopicSpec& query_spec, const std::string& filter_query,
                              const RetrievalConfig& config, Providers& providers, PaperStore& store,
                              const std::string& tag) {
    query_spec.validate();
    config.validate();
    RetrievalReport report;
    auto& diag = providers.diagnostics;

    report.keywords = in_stage("retrieval/keywords", [&] { return generate_keywords(query_spec, providers.llm); });

    std::vector<std::string> queries = report.keywords;
    if (std::none_of(queries.begin(), queries.end(),
                     [&](const std::string& q) { return to_lower(q) == to_lower(trim(query_spec.topic)); })) {
        queries.push_back(trim(query_spec.topic));
    }
    std::vector<PaperRecord> found;
    std::set<std::string> ids;
    in_stage("retrieval/search", [&] {
        for (const auto& q : queries) merge_unique(found, ids, providers.scholarly.search_papers(q, config.search_limit));
        return 0;
    });
    report.searched = found.size();
    if (found.empty()) {
        report.insufficient_corpus = true;
        diag.warn("retrieval", "insufficient corpus: search returned no papers for \"" + query_spec.topic + "\"");
        return report;
    }

    auto filtered = in_stage("retrieval/filter", [&] {
        return semantic_filter(found, filter_query, config.similarity_threshold, providers.embedder, diag);
    });
    report.filtered = filtered.size();

    std::vector<PaperRecord> pool;
    std::set<std::string> pool_ids;
    for (const auto& c : filtered) {
        pool.push_back(c.paper);
        pool_ids.insert(c.paper.paper_id);
    }

    if (config.expansion_enabled && !filtered.empty() && config.expansion_top_m > 0) {
        std::vector<Candidate> ranked;
        for (const auto& c : filtered) {
            if (c.cosine) ranked.push_back(c);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const Candidate& a, const Candidate& b) { return *a.cosine > *b.cosine; });
        if (ranked.size() > config.expansion_top_m) ranked.resize(config.expansion_top_m);
        std::vector<PaperRecord> seeds;
        for (const auto& c : ranked) seeds.push_back(c.paper);
        if (!seeds.empty()) {
            auto expanded = in_stage("retrieval/expand", [&] {
                return expand_citations(seeds, providers.scholarly, config.link_limit, diag);
            });
            std::vector<PaperRecord> fresh;
            for (auto& p : expanded) {
                if (!pool_ids.count(p.paper_id)) fresh.push_back(std::move(p));
            }
            report.expanded = fresh.size();
            if (!fresh.empty()) {
                auto kept = in_stage("retrieval/filter", [&] {
                    return semantic_filter(fresh, filter_query, config.similarity_threshold, providers.embedder, diag);
                });
                report.expanded_kept = kept.size();
                for (const auto& c : kept) {
                    if (pool_ids.insert(c.paper.paper_id).second) pool.push_back(c.paper);
                }
            }
        }
    }

    if (pool.empty()) {
        report.insufficient_corpus = true;
        diag.warn("retrieval", "insufficient corpus: no paper passed the similarity filter");
        return report;
    }
    auto scored = in_stage("retrieval/score", [&] {
        return score_relevance(pool, query_spec, providers.llm, diag, config.scoring_batch_size);
    });
    report.scored = scored.size();
    auto final_set = select_final(std::move(scored), config);
    report.bibkeys = upsert(store, std::move(final_set), tag);
    return report;
}

RetrievalReport survey_level_retrieve(const TopicSpec& spec, const RetrievalConfig& config, Providers& providers,
                                      PaperStore& store) {
    return run_retrieval(spec, spec.query_text(), config, providers, store, provenance::kSurveyLevel);
}

RetrievalReport subsection_retrieve(const SubsectionQuery& query, const RetrievalConfig& config, Providers& providers,
                                    PaperStore& store) {
    if (trim(query.title).empty()) throw PreconditionError("subsection_retrieve: empty subsection title");
    std::vector<std::string> parts;
    for (const auto* s : {&query.section_title, &query.section_description, &query.title, &query.description}) {
        if (!trim(*s).empty()) parts.push_back(trim(*s));
    }
    TopicSpec spec{query.title, query.section_title + ". " + query.description};
    return run_retrieval(spec, join(parts, ". "), config, providers, store, provenance::subsection(query.id));
}

}  // namespace tracewrite
