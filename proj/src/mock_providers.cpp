#include "tracewrite/mock_providers.hpp"

#include "tracewrite/citations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace tracewrite {

namespace {

const std::string& slot(const StructuredPrompt& p, const std::string& name) {
    static const std::string kEmpty;
    auto it = p.slots.find(name);
    return it == p.slots.end() ? kEmpty : it->second;
}

json slot_json(const StructuredPrompt& p, const std::string& name) {
    const auto& s = slot(p, name);
    if (trim(s).empty()) return json();
    return json::parse(s);
}

std::string capitalize(std::string s) {
    for (auto& c : s) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            break;
        }
    }
    return s;
}

std::string title_case(const std::string& phrase) {
    auto words = split(phrase, ' ');
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i].empty()) continue;
        if (i > 0 && is_stopword(words[i])) continue;
        words[i] = capitalize(words[i]);
    }
    return join(words, " ");
}

std::string first_words(const std::string& text, std::size_t n) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (words.size() < n && in >> w) words.push_back(w);
    return join(words, " ");
}

std::size_t word_count(const std::string& text) {
    std::istringstream in(text);
    std::size_t n = 0;
    std::string w;
    while (in >> w) ++n;
    return n;
}

double overlap_fraction(const std::set<std::string>& needles, const std::set<std::string>& hay) {
    if (needles.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& t : needles) hit += hay.count(t);
    return static_cast<double>(hit) / static_cast<double>(needles.size());
}

std::string ensure_period(std::string s) {
    s = trim(s);
    if (!s.empty() && s.back() != '.' && s.back() != '!' && s.back() != '?') s.push_back('.');
    return s;
}

/// Body text of a passage: drops a leading title line.
std::string passage_body(const std::string& text) {
    auto pos = text.find("\n\n");
    if (pos != std::string::npos && pos < 300) return trim(text.substr(pos + 2));
    return trim(text);
}

class Generator {
public:
    Generator(std::uint64_t seed, const MockLlmOptions& options) : seed_(seed), options_(options) {}

    json run(const StructuredPrompt& p) const {
        switch (p.role) {
            case PromptRole::KeywordGen: return keywords(p);
            case PromptRole::RelevanceScore: return relevance(p);
            case PromptRole::ReviewOutlineExtract: return review_outline(p);
            case PromptRole::OutlineGen: return outline(p);
            case PromptRole::OutlineRefine: return refine_outline(p);
            case PromptRole::RawPlan: return raw_plan(p);
            case PromptRole::DepGraph: return dep_graph(p);
            case PromptRole::Skeleton: return skeleton(p);
            case PromptRole::SubsectionWrite: return write(p);
            case PromptRole::DraftSelect: return select(p);
            case PromptRole::Traceworthiness: return traceworthiness(p);
            case PromptRole::TerminologyExtract: return terminology(p);
            case PromptRole::Revision: return json{{"actions", json::array()}};
            case PromptRole::Refinement: return refinement(p);
            case PromptRole::GlobalDiagnosis: return diagnosis(p);
            case PromptRole::TableCoreAspect: return core_aspect(p);
            case PromptRole::TableCategories: return categories(p);
            case PromptRole::TableClassify: return classify(p);
            case PromptRole::TableAspects: return aspects(p);
            case PromptRole::TableCellSummary: return cell_summary(p);
            case PromptRole::Judge: return judge(p);
        }
        throw PreconditionError("mock: unhandled role");
    }

private:
    std::uint64_t h(std::string_view a, std::string_view b = {}) const {
        return hash_combine(hash_combine(seed_, a), b);
    }

    // -- retrieval ---------------------------------------------------------

    json keywords(const StructuredPrompt& p) const {
        const auto& topic = slot(p, "topic");
        const auto& desc = slot(p, "description");
        std::vector<std::string> fixed;
        std::vector<std::string> pool;
        auto add = [](std::vector<std::string>& v, std::string k) {
            k = trim(k);
            if (!k.empty() && std::find(v.begin(), v.end(), k) == v.end()) v.push_back(std::move(k));
        };
        auto topic_tokens = content_tokens(topic);
        add(fixed, to_lower(topic));
        for (std::size_t i = 0; i + 1 < topic_tokens.size(); ++i) {
            add(fixed, topic_tokens[i] + " " + topic_tokens[i + 1]);
        }
        for (const auto& t : topic_tokens) {
            if (t.size() >= 5) add(pool, t);
        }
        auto desc_tokens = content_tokens(desc);
        for (std::size_t i = 0; i + 1 < desc_tokens.size(); ++i) {
            add(pool, desc_tokens[i] + " " + desc_tokens[i + 1]);
        }
        std::mt19937_64 rng(h("keywords", topic));
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::string> out;
        for (auto& k : fixed) {
            if (out.size() < 4) add(out, k);
        }
        for (auto& k : pool) {
            if (out.size() >= 8) break;
            if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
        }
        for (const auto& t : {"survey", "methods", "benchmark"}) {
            if (out.size() >= 3) break;
            add(out, to_lower(topic) + " " + t);
        }
        return json{{"keywords", out}};
    }

    json relevance(const StructuredPrompt& p) const {
        auto topic = content_token_set(slot(p, "topic"));
        auto desc = content_token_set(slot(p, "description"));
        for (const auto& t : topic) desc.erase(t);
        json scores = json::array();
        for (const auto& paper : slot_json(p, "papers")) {
            auto id = paper.value("id", "");
            auto text = content_token_set(paper.value("title", "") + " " + paper.value("abstract", ""));
            double t = overlap_fraction(topic, text);
            std::size_t d_hits = 0;
            for (const auto& tok : desc) d_hits += text.count(tok);
            double d = std::min(1.0, static_cast<double>(d_hits) / 6.0);
            double jitter = static_cast<double>(h("relevance", id) % 7) - 3.0;
            double score = std::clamp(std::round(100.0 * (0.7 * t + 0.3 * d) + jitter), 0.0, 100.0);
            scores.push_back({{"id", id}, {"score", score}});
        }
        return json{{"scores", scores}};
    }

    // -- planning ----------------------------------------------------------

    json review_outline(const StructuredPrompt& p) const {
        std::vector<std::string> headings;
        std::istringstream in(slot(p, "text"));
        std::string line;
        while (std::getline(in, line)) {
            auto t = trim(line);
            if (t.empty() || t.size() > 90) continue;
            bool numbered = std::isdigit(static_cast<unsigned char>(t[0])) && t.find(' ') != std::string::npos;
            if (t[0] == '#' || numbered) {
                auto start = t.find_first_not_of("#0123456789. ");
                if (start != std::string::npos) headings.push_back(t.substr(start));
            }
        }
        if (headings.empty()) {
            for (const auto& s : split_sentences(slot(p, "text"))) {
                if (headings.size() >= 5) break;
                headings.push_back(title_case(first_words(strip_markers(s), 6)));
            }
        }
        return json{{"outline", headings}};
    }

    struct Theme {
        std::string phrase;
        std::vector<std::string> example_titles;
    };

    std::vector<Theme> themes(const json& context, const std::set<std::string>& topic_tokens) const {
        std::map<std::string, std::set<std::size_t>> df;
        std::map<std::string, std::vector<std::string>> examples;
        std::vector<std::string> docs;
        std::vector<std::string> titles;
        for (const auto& a : context.value("abstracts", json::array())) {
            docs.push_back(a.value("title", "") + ". " + a.value("abstract", ""));
            titles.push_back(a.value("title", ""));
        }
        for (const auto& r : context.value("reviews", json::array())) {
            std::string outline;
            for (const auto& hd : r.value("outline", json::array())) outline += hd.get<std::string>() + ". ";
            docs.push_back(outline);
            titles.push_back(r.value("title", ""));
        }
        for (std::size_t d = 0; d < docs.size(); ++d) {
            auto toks = content_tokens(docs[d]);
            for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
                if (toks[i] == toks[i + 1]) continue;
                if (topic_tokens.count(toks[i]) && topic_tokens.count(toks[i + 1])) continue;
                if (toks[i].size() < 3 || toks[i + 1].size() < 3) continue;
                auto bg = toks[i] + " " + toks[i + 1];
                if (df[bg].insert(d).second && examples[bg].size() < 2) examples[bg].push_back(titles[d]);
            }
        }
        std::vector<std::pair<std::string, std::size_t>> ranked;
        for (const auto& [bg, set] : df) {
            if (set.size() >= 2) ranked.emplace_back(bg, set.size());
        }
        std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return h("theme", a.first) < h("theme", b.first);
        });
        std::vector<Theme> out;
        std::set<std::string> used;
        for (const auto& [bg, n] : ranked) {
            auto toks = split(bg, ' ');
            if (used.count(toks[0]) || used.count(toks[1])) continue;
            used.insert(toks.begin(), toks.end());
            out.push_back({bg, examples[bg]});
            if (out.size() >= 6) break;
        }
        return out;
    }

    json outline(const StructuredPrompt& p) const {
        const auto topic = trim(slot(p, "topic"));
        const auto desc = trim(slot(p, "description"));
        auto context = slot_json(p, "context");
        if (context.is_null()) context = json::object();
        auto found = themes(context, content_token_set(topic));
        const std::string topic_title = title_case(topic);

        auto sub = [](std::string title, std::string description) {
            return json{{"subsection_title", std::move(title)}, {"subsection_description", std::move(description)}};
        };
        auto theme_desc = [&](const Theme& t) {
            std::string d = "Examines " + t.phrase + " within " + to_lower(topic);
            if (!t.example_titles.empty()) d += ", drawing on work such as " + join(t.example_titles, " and ");
            return ensure_period(d);
        };

        json sections = json::array();
        json foundations = json::array();
        foundations.push_back(sub("Background and Problem Formulation",
                                  ensure_period("Introduces the core concepts and problem setting of " + to_lower(topic) +
                                                (desc.empty() ? std::string() : ", with a focus on " + to_lower(desc)))));
        foundations.push_back(sub("Taxonomy of Approaches",
                                  "Organizes existing approaches into families and clarifies the terminology used in "
                                  "the rest of the survey."));
        sections.push_back({{"section_title", "Foundations of " + topic_title},
                            {"section_description", "Establishes the background, terminology and taxonomy."},
                            {"subsections", foundations}});

        json methods = json::array();
        json applications = json::array();
        for (std::size_t i = 0; i < found.size(); ++i) {
            auto entry = sub(title_case(found[i].phrase) + (i % 2 == 0 ? " Methods" : " Techniques"), theme_desc(found[i]));
            (i < 4 ? methods : applications).push_back(entry);
        }
        if (methods.empty()) {
            methods.push_back(sub("Representative Methods",
                                  ensure_period("Reviews the representative methods proposed for " + to_lower(topic))));
        }
        sections.push_back({{"section_title", "Methods for " + topic_title},
                            {"section_description", "Reviews the main methodological families."},
                            {"subsections", methods}});

        applications.push_back(sub("Benchmarks and Evaluation Protocols",
                                   ensure_period("Summarizes the benchmarks, metrics and evaluation protocols used to "
                                                 "compare approaches to " + to_lower(topic))));
        sections.push_back({{"section_title", "Evaluation and Applications"},
                            {"section_description", "Covers how methods are evaluated and where they are applied."},
                            {"subsections", applications}});

        json future = json::array();
        future.push_back(sub("Open Challenges",
                             "Identifies unresolved problems, including efficiency, robustness and reproducibility."));
        future.push_back(sub("Future Research Directions",
                             "Outlines promising research directions that follow from the open challenges."));
        sections.push_back({{"section_title", "Challenges and Future Directions"},
                            {"section_description", "Discusses limitations and outlook."},
                            {"subsections", future}});
        return json{{"sections", sections}};
    }

    json refine_outline(const StructuredPrompt& p) const {
        auto outline = slot_json(p, "outline");
        std::set<std::string> seen;
        json sections = json::array();
        for (auto sec : outline.value("sections", json::array())) {
            json subs = json::array();
            for (auto s : sec.value("subsections", json::array())) {
                auto title = trim(s.value("subsection_title", ""));
                if (title.empty() || !seen.insert(to_lower(title)).second) continue;
                if (trim(s.value("subsection_description", "")).empty()) {
                    s["subsection_description"] = "Covers " + to_lower(title) + ".";
                }
                subs.push_back(s);
            }
            if (subs.empty()) continue;
            sec["subsections"] = subs;
            sections.push_back(sec);
        }
        return json{{"sections", sections}};
    }

    static std::vector<std::pair<std::size_t, json>> flatten(const json& outline) {
        std::vector<std::pair<std::size_t, json>> out;
        std::size_t si = 0;
        for (const auto& sec : outline.value("sections", json::array())) {
            for (const auto& s : sec.value("subsections", json::array())) out.emplace_back(si, s);
            ++si;
        }
        return out;
    }

    json raw_plan(const StructuredPrompt& p) const {
        auto outline = slot_json(p, "outline");
        auto subs = flatten(outline);
        json entries = json::array();
        bool any_table = false;
        for (const auto& [si, s] : subs) {
            auto title = s.value("subsection_title", "");
            bool search = h("retrieve", title) % 3 == 0;
            bool table = si == 1 && h("table", title) % 2 == 0;
            any_table = any_table || table;
            entries.push_back({{"subsection_title", title}, {"trigger_additional_search", search}, {"generate_table", table}});
        }
        if (!any_table) {
            for (std::size_t i = 0; i < subs.size(); ++i) {
                if (subs[i].first == 1) {
                    entries[i]["generate_table"] = true;
                    break;
                }
            }
        }
        return json{{"entries", entries}};
    }

    json dep_graph(const StructuredPrompt& p) const {
        auto outline = slot_json(p, "outline");
        auto subs = flatten(outline);
        std::size_t last_section = subs.empty() ? 0 : subs.back().first;
        json deps = json::array();
        for (std::size_t j = 0; j < subs.size(); ++j) {
            auto title = subs[j].second.value("subsection_title", "");
            std::vector<std::string> on;
            for (std::size_t i = 0; i < j; ++i) {
                auto other = subs[i].second.value("subsection_title", "");
                bool first_of_first = subs[i].first == 0 && (i == 0);
                bool same_section_prev = subs[i].first == subs[j].first && i + 1 == j;
                if (subs[j].first == 1 && first_of_first) on.push_back(other);
                else if (same_section_prev && h("dep", title + "|" + other) % 3 == 0) on.push_back(other);
                else if (subs[j].first == last_section && last_section > 1 && subs[i].first == 1 &&
                         h("late", title + "|" + other) % 2 == 0)
                    on.push_back(other);
            }
            deps.push_back({{"subsection_title", title}, {"depends_on", on}});
        }
        return json{{"dependencies", deps}};
    }

    // -- writing -----------------------------------------------------------

    json skeleton(const StructuredPrompt& p) const {
        const auto title = slot(p, "title");
        const auto desc = slot(p, "description");
        std::vector<std::string> points;
        points.push_back("Introduce " + to_lower(title) + " and its motivation");
        std::string clauses = replace_all(replace_all(strip_markers(desc), ";", ","), " and ", ",");
        for (auto& c : split(clauses, ',')) {
            auto t = trim(replace_all(c, ".", ""));
            if (word_count(t) < 2) continue;
            points.push_back(capitalize(t));
            if (points.size() >= 5) break;
        }
        auto context = slot_json(p, "context");
        if (context.is_object()) {
            const auto& passages = context.value("passages", json::array());
            for (std::size_t i = 0; i < passages.size() && points.size() < 7; i += 3) {
                auto body = split_sentences(passage_body(passages[i].value("text", "")));
                if (body.empty()) continue;
                points.push_back("Discuss " + to_lower(first_words(strip_markers(body.front()), 8)));
            }
        }
        points.push_back("Summarize open questions in " + to_lower(title));

        json terms = json::array();
        auto focus = content_token_set(title + " " + desc);
        auto memory = slot_json(p, "memory");
        if (memory.is_object()) {
            for (const auto& t : memory.value("terms", json::array())) {
                auto term = t.value("term", "");
                auto toks = content_token_set(term);
                bool relevant = std::any_of(toks.begin(), toks.end(), [&](const std::string& x) { return focus.count(x) > 0; });
                if (relevant) terms.push_back(term);
            }
        }
        return json{{"points", points}, {"terminology", terms}};
    }

    json write(const StructuredPrompt& p) const {
        const auto title = slot(p, "title");
        auto skeleton = slot_json(p, "skeleton");
        auto context = slot_json(p, "context");
        const std::size_t candidate = static_cast<std::size_t>(std::stoul(slot(p, "candidate_index").empty() ? "0" : slot(p, "candidate_index")));
        const std::size_t budget = slot(p, "word_budget").empty() ? 400 : std::stoul(slot(p, "word_budget"));
        std::vector<std::string> points;
        for (const auto& pt : skeleton.value("points", json::array())) points.push_back(pt.get<std::string>());
        std::vector<std::string> terms;
        for (const auto& t : skeleton.value("terminology", json::array())) terms.push_back(t.get<std::string>());
        const auto& passages = context.value("passages", json::array());
        const auto& traced = context.value("traced", json::array());

        std::vector<std::string> paragraphs;
        std::size_t words = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (candidate > 0 && points.size() > 3 && i == (candidate % points.size())) continue;  // weaker coverage
            std::string para = ensure_period(points[i]);
            if (i == 0 && !terms.empty()) para += " Following the earlier sections, we use the term " + terms.front() + " consistently.";
            if (!passages.empty()) {
                const auto& ps = passages[(i + candidate) % passages.size()];
                auto sentences = split_sentences(passage_body(ps.value("text", "")));
                if (!sentences.empty()) {
                    auto pick = sentences[(i + candidate) % sentences.size()];
                    auto clean = strip_markers(pick);
                    if (word_count(clean) > 30) clean = first_words(clean, 30);
                    clean = trim(clean);
                    while (!clean.empty() && (clean.back() == '.' || clean.back() == ',' || clean.back() == ';')) clean.pop_back();
                    if (!clean.empty()) para += " " + capitalize(clean) + " \\cite{" + ps.value("bibkey", "") + "}.";
                }
                for (const auto& t : traced) {
                    if (t.value("passage_index", -1) == static_cast<int>((i + candidate) % passages.size())) {
                        para += " The original formulation appears in " + t.value("title", "") + " \\cite{" +
                                t.value("bibkey", "") + "}.";
                    }
                }
            }
            paragraphs.push_back(para);
            words += word_count(para);
            if (words >= budget && paragraphs.size() >= 3) break;
        }
        return json{{"text", join(paragraphs, "\n\n")}};
    }

    static std::size_t coverage(const std::vector<std::string>& points, const std::string& draft) {
        auto toks = content_token_set(draft);
        std::size_t covered = 0;
        for (const auto& pt : points) {
            if (overlap_fraction(content_token_set(pt), toks) >= 0.6) ++covered;
        }
        return covered;
    }

    json select(const StructuredPrompt& p) const {
        auto skeleton = slot_json(p, "skeleton");
        std::vector<std::string> points;
        for (const auto& pt : skeleton.value("points", json::array())) points.push_back(pt.get<std::string>());
        auto drafts = slot_json(p, "drafts");
        std::size_t best = 0;
        std::size_t best_cov = 0;
        for (std::size_t i = 0; i < drafts.size(); ++i) {
            auto cov = coverage(points, drafts[i].get<std::string>());
            if (i == 0 || cov > best_cov) {
                best = i;
                best_cov = cov;
            }
        }
        return json{{"best_index", best},
                    {"justification", "Draft " + std::to_string(best) + " covers " + std::to_string(best_cov) + " of " +
                                          std::to_string(points.size()) + " skeleton points."}};
    }

    json traceworthiness(const StructuredPrompt& p) const {
        const auto passage = slot(p, "passage");
        auto markers = slot_json(p, "markers");
        static const std::vector<std::string> kBackground = {"e.g.", "see ", "for example", "such as", "surveyed",
                                                             "review", "background", "among others"};
        static const std::vector<std::string> kCore = {"introduc", "propos", "first", "original", "pioneer",
                                                       "seminal", "framework", "method"};
        auto sentences = split_sentences(passage);
        json out = json::array();
        for (const auto& m : markers) {
            auto surface = m.get<std::string>();
            std::string sentence;
            for (const auto& s : sentences) {
                if (s.find(surface) != std::string::npos) {
                    sentence = to_lower(s);
                    break;
                }
            }
            bool background = std::any_of(kBackground.begin(), kBackground.end(),
                                          [&](const std::string& c) { return sentence.find(c) != std::string::npos; });
            bool core = std::any_of(kCore.begin(), kCore.end(),
                                    [&](const std::string& c) { return sentence.find(c) != std::string::npos; });
            bool worthy = core && !background;
            out.push_back({{"marker", surface},
                           {"traceworthy", worthy},
                           {"explanation", worthy ? "Cited as the source that introduced a core method."
                                                  : "Cited as background or in passing."}});
        }
        return json{{"assessments", out}};
    }

    json terminology(const StructuredPrompt& p) const {
        const auto text = strip_cites(slot(p, "text"));
        std::vector<std::string> terms;
        std::set<std::string> seen;
        std::istringstream in(text);
        std::string w;
        auto add = [&](const std::string& t) {
            if (t.size() < 2 || terms.size() >= 12) return;
            if (seen.insert(to_lower(t)).second) terms.push_back(t);
        };
        while (in >> w) {
            std::string core;
            for (char c : w) {
                if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') core.push_back(c);
            }
            int upper = 0;
            for (char c : core) upper += std::isupper(static_cast<unsigned char>(c)) ? 1 : 0;
            if (upper >= 2 && core.size() <= 12) add(core);
        }
        std::map<std::string, std::size_t> freq;
        for (const auto& t : content_tokens(text)) {
            if (t.size() >= 7) ++freq[t];
        }
        std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        for (const auto& [t, n] : ranked) {
            if (terms.size() >= 6) break;
            add(t);
        }
        auto sentences = split_sentences(text);
        json out = json::array();
        for (const auto& t : terms) {
            std::string def;
            for (const auto& s : sentences) {
                if (contains_ci(s, t)) {
                    def = first_words(s, 20);
                    break;
                }
            }
            out.push_back({{"term", t}, {"definition", def}});
        }
        return json{{"terms", out}};
    }

    json refinement(const StructuredPrompt& p) const {
        const auto pass = slot(p, "pass");
        std::string text = slot(p, "text");
        if (options_.identity_refinement || pass == "structure") return json{{"text", text}};
        if (pass == "polish") {
            std::string out;
            for (char c : text) {
                if (c == ' ' && !out.empty() && out.back() == ' ') continue;
                out.push_back(c);
            }
            return json{{"text", out}};
        }
        if (pass == "global") {
            auto context = slot_json(p, "context");
            std::set<std::string> other;
            for (const auto& s : split_sentences(strip_cites(context.value("other_text", "")))) other.insert(trim(s));
            std::vector<std::string> paragraphs;
            for (const auto& para : split(text, '\n')) {
                if (trim(para).empty()) {
                    paragraphs.push_back("");
                    continue;
                }
                std::vector<std::string> kept;
                for (const auto& s : split_sentences(para)) {
                    if (other.count(trim(strip_cites(s)))) {
                        auto keys = cite_keys(s);
                        if (keys.empty()) continue;
                        kept.push_back("As discussed earlier, the same evidence applies here \\cite{" + join(keys, ",") + "}.");
                    } else {
                        kept.push_back(s);
                    }
                }
                paragraphs.push_back(join(kept, " "));
            }
            return json{{"text", join(paragraphs, "\n")}};
        }
        // citation pass
        static const std::vector<std::string> kClaim = {"show", "improv", "outperform", "achiev", "reduc",
                                                        "demonstrat", "%", "state-of-the-art", "match"};
        auto context = slot_json(p, "context");
        const auto& passages = context.value("passages", json::array());
        json claims = json::array();
        std::vector<std::string> paragraphs;
        for (const auto& para : split(text, '\n')) {
            if (trim(para).empty()) {
                paragraphs.push_back("");
                continue;
            }
            std::vector<std::string> out;
            for (auto s : split_sentences(para)) {
                auto lower = to_lower(s);
                bool claim = std::any_of(kClaim.begin(), kClaim.end(),
                                         [&](const std::string& c) { return lower.find(c) != std::string::npos; });
                if (claim && cite_keys(s).empty() && !passages.empty()) {
                    auto toks = content_token_set(s);
                    std::size_t best = 0;
                    double best_score = -1;
                    for (std::size_t i = 0; i < passages.size(); ++i) {
                        double sc = overlap_fraction(toks, content_token_set(passages[i].value("text", "")));
                        if (sc > best_score) {
                            best = i;
                            best_score = sc;
                        }
                    }
                    auto body = trim(s);
                    if (!body.empty() && body.back() == '.') body.pop_back();
                    s = body + " \\cite{" + passages[best].value("bibkey", "") + "}.";
                }
                if (claim) claims.push_back(s);
                out.push_back(s);
            }
            paragraphs.push_back(join(out, " "));
        }
        return json{{"text", join(paragraphs, "\n")}, {"claim_sentences", claims}};
    }

    json diagnosis(const StructuredPrompt& p) const {
        auto doc = slot_json(p, "document");
        std::map<std::string, std::string> first_seen;
        json flagged = json::array();
        for (const auto& sub : doc) {
            auto id = sub.value("id", "");
            bool dup = false;
            std::string where;
            for (const auto& s : split_sentences(strip_cites(sub.value("text", "")))) {
                auto t = trim(s);
                if (word_count(t) < 8) continue;
                auto it = first_seen.find(t);
                if (it != first_seen.end() && it->second != id) {
                    dup = true;
                    where = it->second;
                } else if (it == first_seen.end()) {
                    first_seen.emplace(t, id);
                }
            }
            if (dup) flagged.push_back({{"subsection_id", id}, {"issue", "Repeats content already covered in " + where + "."}});
        }
        return json{{"flagged", flagged}};
    }

    // -- tables ------------------------------------------------------------

    json core_aspect(const StructuredPrompt&) const { return json{{"aspect", "methodological approach"}}; }

    json categories(const StructuredPrompt& p) const {
        auto papers = slot_json(p, "papers");
        auto topic = content_token_set(slot(p, "title"));
        std::map<std::string, std::size_t> df;
        for (const auto& paper : papers) {
            for (const auto& t : content_token_set(paper.value("title", ""))) {
                if (t.size() >= 4 && !topic.count(t)) ++df[t];
            }
        }
        std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
        std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return h("category", a.first) < h("category", b.first);
        });
        json cats = json::array();
        for (const auto& [t, n] : ranked) {
            if (cats.size() >= 5) break;
            cats.push_back(capitalize(t) + "-based");
        }
        cats.push_back("Others");
        return json{{"categories", cats}};
    }

    json classify(const StructuredPrompt& p) const {
        auto cats = slot_json(p, "categories");
        auto paper = slot_json(p, "paper");
        auto toks = content_token_set(paper.value("title", ""));
        json out = json::array();
        for (const auto& c : cats) {
            auto name = c.get<std::string>();
            if (name == "Others") continue;
            auto ctoks = content_token_set(replace_all(name, "-based", ""));
            if (!ctoks.empty() && overlap_fraction(ctoks, toks) >= 1.0) out.push_back(name);
        }
        if (out.empty()) out.push_back("Others");
        return json{{"categories", out}};
    }

    json aspects(const StructuredPrompt& p) const {
        static const std::vector<std::string> kPool = {"Core idea", "Training data", "Evaluation benchmark",
                                                       "Efficiency", "Main limitation"};
        std::size_t n = 3 + h("aspects", slot(p, "title")) % 3;
        return json{{"aspects", std::vector<std::string>(kPool.begin(), kPool.begin() + static_cast<long>(n))}};
    }

    json cell_summary(const StructuredPrompt& p) const {
        const auto evidence = trim(slot(p, "evidence"));
        if (evidence.empty()) return json{{"value", "not reported"}};
        auto sentences = split_sentences(strip_markers(passage_body(evidence)));
        if (sentences.empty()) return json{{"value", "not reported"}};
        auto aspect = content_token_set(slot(p, "aspect"));
        std::size_t best = 0;
        double best_score = -1;
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            double s = overlap_fraction(aspect, content_token_set(sentences[i]));
            if (s > best_score) {
                best = i;
                best_score = s;
            }
        }
        auto v = first_words(sentences[best], 8);
        while (!v.empty() && (v.back() == '.' || v.back() == ',')) v.pop_back();
        return json{{"value", v}};
    }

    json judge(const StructuredPrompt& p) const {
        std::array<double, 5> s{};
        if (options_.judge_scores) {
            s = *options_.judge_scores;
        } else {
            const auto doc = slot(p, "document");
            double cites = static_cast<double>(cite_key_set(doc).size());
            double words = static_cast<double>(word_count(doc));
            s = {std::min(5.0, 3.0 + cites / 20.0), 4.0, std::min(5.0, 3.5 + words / 10000.0), 3.5,
                 4.0 + static_cast<double>(h("judge", doc) % 2) * 0.5};
        }
        return json{{"scores",
                     {{"coverage", s[0]}, {"relevance", s[1]}, {"structure", s[2]}, {"synthesis", s[3]}, {"consistency", s[4]}}},
                    {"explanation", "Scores reflect citation breadth, topical focus, outline structure, synthesis "
                                    "across sources and terminology consistency."}};
    }

    std::uint64_t seed_;
    const MockLlmOptions& options_;
};

}  // namespace

// ---------------------------------------------------------------------------
// MockCompletionBackend
// ---------------------------------------------------------------------------

MockCompletionBackend::MockCompletionBackend(std::uint64_t seed, MockLlmOptions options)
    : seed_(seed), options_(std::move(options)) {}

void MockCompletionBackend::script(PromptRole role, std::vector<MockReply> replies) {
    std::lock_guard lock(mutex_);
    auto& q = scripts_[role];
    for (auto& r : replies) q.push_back(std::move(r));
}

void MockCompletionBackend::set_handler(PromptRole role, Handler handler) {
    std::lock_guard lock(mutex_);
    handlers_[role] = std::move(handler);
}

std::size_t MockCompletionBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

json MockCompletionBackend::generate(const StructuredPrompt& prompt) const {
    return Generator(seed_, options_).run(prompt);
}

std::string MockCompletionBackend::complete(const StructuredPrompt& prompt, const std::string&) {
    Handler handler;
    {
        std::lock_guard lock(mutex_);
        ++calls_;
        if (unreachable_) throw BackendUnreachable("mock completion backend unreachable");
        auto it = scripts_.find(prompt.role);
        if (it != scripts_.end() && !it->second.empty()) {
            auto reply = std::move(it->second.front());
            it->second.pop_front();
            switch (reply.kind) {
                case MockReply::Kind::Text: return reply.text;
                case MockReply::Kind::Unreachable: throw BackendUnreachable("scripted: backend unreachable");
                case MockReply::Kind::Timeout: throw TimeoutError("scripted: timeout");
                case MockReply::Kind::RateLimited: throw RateLimited("scripted: rate limited");
            }
        }
        if (auto h = handlers_.find(prompt.role); h != handlers_.end()) handler = h->second;
    }
    if (handler) {
        if (auto text = handler(prompt)) return *text;
    }
    return generate(prompt).dump();
}

// ---------------------------------------------------------------------------
// Embeddings and reranking
// ---------------------------------------------------------------------------

HashingEmbedder::HashingEmbedder(std::uint64_t seed, std::size_t dimension) : seed_(seed), dimension_(dimension) {
    if (dimension_ < 8) throw PreconditionError("embedding dimension too small");
}

std::vector<Embedding> HashingEmbedder::do_embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(dimension_, 0.0);
        auto tokens = content_token_set(text);
        if (tokens.empty()) tokens.insert(text);
        for (const auto& t : tokens) {
            auto hv = hash_combine(seed_, t);
            auto idx = static_cast<std::size_t>(hv % dimension_);
            v[idx] += ((hv >> 32) & 1) ? 1.0 : -1.0;
        }
        double norm = 0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            v[static_cast<std::size_t>(hash_combine(seed_, text) % dimension_)] = 1.0;
        } else {
            for (double& x : v) x /= norm;
        }
        out.push_back(Embedding{std::move(v)});
    }
    return out;
}

std::vector<Embedding> FixtureEmbedder::do_embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    for (const auto& t : texts) {
        auto it = table_.find(t);
        if (it == table_.end()) throw ProviderError("fixture embedder has no vector for: " + t);
        out.push_back(it->second);
    }
    return out;
}

std::vector<double> OverlapReranker::score(const std::string& query, const std::vector<std::string>& documents) {
    auto q = content_token_set(query);
    std::vector<double> out;
    out.reserve(documents.size());
    for (const auto& d : documents) {
        auto dt = content_token_set(d);
        std::size_t hit = 0;
        for (const auto& t : q) hit += dt.count(t);
        double denom = std::sqrt(static_cast<double>(q.size()) * static_cast<double>(std::max<std::size_t>(1, dt.size())));
        out.push_back(denom == 0.0 ? 0.0 : static_cast<double>(hit) / denom);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fixture scholarly backend
// ---------------------------------------------------------------------------

PaperRecord paper_from_fixture_json(const json& j) {
    PaperRecord r;
    r.paper_id = j.at("paper_id").get<std::string>();
    r.title = j.at("title").get<std::string>();
    r.abstract = j.value("abstract", "");
    r.authors = j.value("authors", std::vector<std::string>{});
    if (j.contains("year") && j["year"].is_number_integer()) r.year = j["year"].get<int>();
    if (j.contains("url") && j["url"].is_string()) r.url = j["url"].get<std::string>();
    if (j.contains("full_text") && j["full_text"].is_string()) r.full_text = j["full_text"].get<std::string>();
    r.is_review = detect_review(j.value("publication_types", std::vector<std::string>{}), r.title);
    return r;
}

FixtureScholarlyProvider::FixtureScholarlyProvider(const json& corpus) {
    for (const auto& p : corpus.at("papers")) {
        auto rec = paper_from_fixture_json(p);
        references_[rec.paper_id] = p.value("references", std::vector<std::string>{});
        citations_[rec.paper_id] = p.value("citations", std::vector<std::string>{});
        search_text_.push_back(" " + normalize_title(rec.title + " " + rec.abstract) + " ");
        papers_.push_back(std::move(rec));
    }
}

std::unique_ptr<FixtureScholarlyProvider> FixtureScholarlyProvider::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read fixture corpus " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("fixture corpus is not valid JSON: ") + e.what(), path.string());
    }
    return std::make_unique<FixtureScholarlyProvider>(j);
}

std::size_t FixtureScholarlyProvider::request_count() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

void FixtureScholarlyProvider::count_request() const {
    std::lock_guard lock(mutex_);
    ++requests_;
}

const PaperRecord* FixtureScholarlyProvider::find(const std::string& id) const {
    for (const auto& p : papers_) {
        if (p.paper_id == id) return &p;
    }
    return nullptr;
}

std::vector<PaperRecord> FixtureScholarlyProvider::do_search(const std::string& query, std::size_t limit) {
    count_request();
    if (unreachable_) throw BackendUnreachable("fixture scholarly backend unreachable");
    const auto needle = " " + normalize_title(query) + " ";
    std::vector<PaperRecord> out;
    if (trim(needle).empty()) return out;
    for (std::size_t i = 0; i < papers_.size() && out.size() < limit; ++i) {
        if (search_text_[i].find(needle) != std::string::npos) out.push_back(papers_[i]);
    }
    return out;
}

std::vector<PaperRecord> FixtureScholarlyProvider::do_linked(const std::string& paper_id, LinkDirection direction,
                                                             std::size_t limit) {
    count_request();
    if (unreachable_ || failing_ids_.count(paper_id)) throw BackendUnreachable("fixture link lookup failed for " + paper_id);
    const auto& table = direction == LinkDirection::References ? references_ : citations_;
    auto it = table.find(paper_id);
    if (it == table.end()) throw UnknownPaperId("unknown paper id: " + paper_id);
    std::vector<PaperRecord> out;
    for (const auto& id : it->second) {
        if (out.size() >= limit) break;
        if (const auto* p = find(id)) out.push_back(*p);
    }
    return out;
}

std::vector<PaperRecord> FixtureScholarlyProvider::do_resolve_candidates(const std::string&) {
    count_request();
    if (unreachable_) throw BackendUnreachable("fixture scholarly backend unreachable");
    return papers_;
}

}  // namespace tracewrite
