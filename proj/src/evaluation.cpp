#include "tracewrite/evaluation.hpp"

#include "tracewrite/citations.hpp"
#include "tracewrite/paper.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <regex>
#include <sstream>

namespace tracewrite {

namespace {

const std::regex& reference_heading_re() {
    static const std::regex re(
        R"(^\s*(?:#{1,6}\s*(?:\d+(?:\.\d+)*\.?\s+)?(?:references|bibliography|reference list)\s*#*\s*$|\*\*(?:references|bibliography)\*\*\s*$|\\section\*?\{(?:references|bibliography)\}|\\begin\{thebibliography\}|\\bibliography\{|\\printbibliography))",
        std::regex::icase);
    return re;
}

std::optional<int> first_year(const std::string& s) {
    static const std::regex paren(R"(\((?:19|20)\d{2}[a-z]?\))");
    static const std::regex bare(R"(\b((?:19|20)\d{2})[a-z]?\b)");
    std::smatch m;
    if (std::regex_search(s, m, paren)) return std::stoi(m.str().substr(1, 4));
    if (std::regex_search(s, m, bare)) return std::stoi(m[1].str());
    return std::nullopt;
}

std::string first_author_surname(const std::string& text) {
    std::size_t cut = text.size();
    for (const char* stop : {",", " et al", " and ", " & ", " ("}) {
        cut = std::min(cut, text.find(stop));
    }
    static const std::regex dot_year(R"(\.\s+(?:19|20)\d{2})");
    std::smatch m;
    std::string head = text.substr(0, cut);
    if (std::regex_search(head, m, dot_year)) head = head.substr(0, static_cast<std::size_t>(m.position()));
    head = trim(head);
    if (head.empty()) return {};
    return to_lower(author_surname(head));
}

std::string entry_title(const std::string& text) {
    // "Authors (Year). Title. Rest" or "Authors. Year. Title. Rest"
    static const std::regex after_year(R"((?:\((?:19|20)\d{2}[a-z]?\)|(?:19|20)\d{2}[a-z]?)\.\s+([^.]+))");
    std::smatch m;
    if (std::regex_search(text, m, after_year)) return trim(m[1].str());
    return {};
}

BibEntry make_entry(std::string id, std::string text) {
    BibEntry e;
    e.id = std::move(id);
    e.text = trim(text);
    e.year = first_year(e.text);
    e.surname = first_author_surname(e.text);
    e.title = entry_title(e.text);
    return e;
}

std::vector<BibEntry> parse_reference_section(const std::string& section) {
    static const std::regex ours(R"(^\s*[-*+]\s*\[([^\]\s]+)\]\*?\s*(.*)$)");
    static const std::regex numbered_bracket(R"(^\s*\[(\d+)\]\s*(.+)$)");
    static const std::regex numbered_list(R"(^\s*(\d+)[.)]\s+(.+)$)");
    static const std::regex bibitem(R"(^\s*\\bibitem(?:\[[^\]]*\])?\{([^}]+)\}\s*(.*)$)");
    static const std::regex bullet(R"(^\s*[-*+]\s+(.+)$)");
    std::vector<BibEntry> out;
    std::size_t plain = 0;
    std::istringstream in(section);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (std::regex_match(line, m, ours) || std::regex_match(line, m, numbered_bracket) ||
            std::regex_match(line, m, bibitem) || std::regex_match(line, m, numbered_list)) {
            out.push_back(make_entry(m[1].str(), m[2].str()));
        } else if (std::regex_match(line, m, bullet)) {
            out.push_back(make_entry("entry" + std::to_string(++plain), m[1].str()));
        } else if (!out.empty() && !trim(line).empty() && line.front() == ' ') {
            auto& last = out.back();
            last = make_entry(last.id, last.text + " " + trim(line));
        }
    }
    return out;
}

std::string bibtex_field(const std::string& body, const std::string& name) {
    static const std::regex field_start(R"((\w+)\s*=\s*)");
    for (auto it = std::sregex_iterator(body.begin(), body.end(), field_start); it != std::sregex_iterator(); ++it) {
        if (to_lower((*it)[1].str()) != name) continue;
        auto pos = static_cast<std::size_t>(it->position() + it->length());
        if (pos >= body.size()) return {};
        if (body[pos] == '{') {
            int depth = 0;
            std::string out;
            for (std::size_t i = pos; i < body.size(); ++i) {
                if (body[i] == '{') {
                    if (depth++ > 0) out.push_back('{');
                } else if (body[i] == '}') {
                    if (--depth == 0) break;
                    out.push_back('}');
                } else {
                    out.push_back(body[i]);
                }
            }
            return trim(replace_all(replace_all(out, "{", ""), "}", ""));
        }
        if (body[pos] == '"') {
            auto close = body.find('"', pos + 1);
            return trim(body.substr(pos + 1, close == std::string::npos ? std::string::npos : close - pos - 1));
        }
        auto end = body.find_first_of(",}\n", pos);
        return trim(body.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
    }
    return {};
}

void check_document_bytes(const std::string& text) {
    if (trim(text).empty()) throw ParseError("empty document", "byte 0");
    if (auto nul = text.find('\0'); nul != std::string::npos) throw ParseError("binary content", "byte " + std::to_string(nul));
    if (auto bad = utf8_invalid_offset(text); bad != std::string::npos)
        throw ParseError("invalid UTF-8", "byte " + std::to_string(bad));
    auto t = trim(text);
    if (t.front() == '{' || t.front() == '[') {
        if (json::accept(t)) throw ParseError("JSON data is not a survey document", "line 1");
    }
}

const std::regex& pandoc_group_re() {
    static const std::regex re(R"(\[[^\[\]]*@[^\[\]]*\])");
    return re;
}

const std::regex& latex_cite_re() {
    static const std::regex re(R"(\\(?:cite|citep|citet|parencite|textcite|autocite|citeauthor|citeyear)\*?(?:\[[^\]]*\])*\{([^}]*)\})");
    return re;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

std::vector<BibEntry> parse_bibtex(const std::string& text) {
    std::vector<BibEntry> out;
    static const std::regex head(R"(@(\w+)\s*\{\s*([^,\s]+)\s*,)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), head); it != std::sregex_iterator(); ++it) {
        auto type = to_lower((*it)[1].str());
        if (type == "comment" || type == "string" || type == "preamble") continue;
        auto start = static_cast<std::size_t>(it->position() + it->length());
        int depth = 1;
        std::size_t end = start;
        while (end < text.size() && depth > 0) {
            if (text[end] == '{') ++depth;
            if (text[end] == '}') --depth;
            ++end;
        }
        const auto body = text.substr(start, end - start);
        BibEntry e;
        e.id = (*it)[2].str();
        e.title = bibtex_field(body, "title");
        auto authors = bibtex_field(body, "author");
        auto first = authors.substr(0, authors.find(" and "));
        e.surname = first.empty() ? "" : to_lower(author_surname(first));
        auto year = bibtex_field(body, "year");
        if (!year.empty()) e.year = first_year(year);
        e.text = authors + " (" + year + "). " + e.title + ".";
        out.push_back(std::move(e));
    }
    return out;
}

ParsedDocument parse_document(const std::string& text, const std::string& bibtex) {
    check_document_bytes(text);
    ParsedDocument doc;
    std::size_t pos = 0;
    std::size_t cut = text.size();
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (std::regex_search(line, reference_heading_re())) {
            cut = pos;
            doc.has_reference_section = true;
            break;
        }
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    doc.body = text.substr(0, cut);
    if (doc.has_reference_section) doc.bibliography = parse_reference_section(text.substr(cut));
    if (!bibtex.empty()) {
        std::set<std::string> ids;
        for (const auto& e : doc.bibliography) ids.insert(e.id);
        for (auto& e : parse_bibtex(bibtex)) {
            if (ids.insert(e.id).second) doc.bibliography.push_back(std::move(e));
        }
    }
    return doc;
}

std::string visible_text(const std::string& body) {
    static const std::regex pandoc(R"([ \t]*\[[^\[\]]*@[^\[\]]*\]\*?)");
    static const std::regex latex(
        R"([ \t]*\\(?:cite|citep|citet|parencite|textcite|autocite|citeauthor|citeyear)\*?(?:\[[^\]]*\])*\{[^}]*\}(?:\$\^\{\*\}\$)?)");
    static const std::regex star_sup(R"(\$\^\{\*\}\$)");
    static const std::regex escaped(R"(\\([%&_#$]))");
    static const std::regex env(R"(\\(?:begin|end)\{[^}]*\}(?:\{[^}]*\})?)");
    static const std::regex dropped(
        R"(\\(?:documentclass|usepackage|label|bibliographystyle|bibliography|date|author)(?:\[[^\]]*\])?(?:\{[^}]*\})?)");
    static const std::regex bare_cmd(R"(\\(?:maketitle|tableofcontents|hline|toprule|midrule|bottomrule|centering|noindent)\b)");
    static const std::regex command(R"(\\[A-Za-z]+\*?)");
    static const std::regex heading(R"(^[ \t]*#{1,6}[ \t]+)");
    static const std::regex bullet(R"(^[ \t]*[-+][ \t]+)");
    static const std::regex rule_line(R"(^[ \t|:\-]+$)");

    std::string s = std::regex_replace(body, pandoc, "");
    s = std::regex_replace(s, latex, "");
    s = std::regex_replace(s, star_sup, "");
    s = replace_all(s, "\\\\", "");
    s = std::regex_replace(s, env, "");
    s = std::regex_replace(s, dropped, "");
    s = std::regex_replace(s, bare_cmd, "");
    s = std::regex_replace(s, escaped, "$1");
    s = std::regex_replace(s, command, "");

    std::string out;
    std::istringstream in(s);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!first) out.push_back('\n');
        first = false;
        if (line.find('|') != std::string::npos && std::regex_match(line, rule_line)) continue;
        line = std::regex_replace(line, heading, "");
        line = std::regex_replace(line, bullet, "");
        out += line;
    }
    std::string cleaned;
    for (char c : out) {
        if (c == '*' || c == '`' || c == '|' || c == '{' || c == '}') continue;
        cleaned.push_back(c);
    }
    return replace_all(cleaned, "__", "");
}

std::size_t body_character_count(const std::string& body) {
    auto v = visible_text(body);
    v.erase(std::remove_if(v.begin(), v.end(), [](char c) { return c == '\n' || c == '\r'; }), v.end());
    return utf8_length(v);
}

std::vector<BodyMarker> body_markers(const std::string& body) {
    std::vector<std::pair<std::size_t, BodyMarker>> found;
    std::string blanked = body;
    auto blank = [&](std::size_t b, std::size_t n) {
        for (std::size_t i = b; i < b + n; ++i) {
            if (blanked[i] != '\n') blanked[i] = ' ';
        }
    };
    static const std::regex pandoc_key(R"(@([A-Za-z0-9_][A-Za-z0-9_:.#$%&+?<>~/\-]*))");
    for (auto it = std::sregex_iterator(body.begin(), body.end(), pandoc_group_re()); it != std::sregex_iterator(); ++it) {
        const auto group = it->str();
        const auto at = static_cast<std::size_t>(it->position());
        for (auto k = std::sregex_iterator(group.begin(), group.end(), pandoc_key); k != std::sregex_iterator(); ++k) {
            auto key = (*k)[1].str();
            while (!key.empty() && (key.back() == '.' || key.back() == ':')) key.pop_back();
            found.push_back({at + static_cast<std::size_t>(k->position()), {"key:" + key, "@" + key}});
        }
        blank(at, group.size());
    }
    for (auto it = std::sregex_iterator(body.begin(), body.end(), latex_cite_re()); it != std::sregex_iterator(); ++it) {
        const auto at = static_cast<std::size_t>(it->position());
        for (const auto& raw : split((*it)[1].str(), ',')) {
            auto key = trim(raw);
            if (!key.empty()) found.push_back({at, {"key:" + key, it->str()}});
        }
        blank(at, static_cast<std::size_t>(it->length()));
    }
    for (const auto& m : marker_occurrences(blanked)) {
        std::string id = m.kind == MarkerKind::Numeric ? "num:" + m.key.substr(2) : m.key;
        found.push_back({m.begin, {id, m.surface}});
    }
    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<BodyMarker> out;
    for (auto& f : found) out.push_back(std::move(f.second));
    return out;
}

DocumentStats analyze_document(const ParsedDocument& doc, Diagnostics& diagnostics) {
    DocumentStats st;
    st.body_text = visible_text(doc.body);
    st.body_characters = body_character_count(doc.body);
    auto markers = body_markers(doc.body);
    st.marker_occurrences = markers.size();

    std::map<std::string, const BibEntry*> by_id;
    for (const auto& e : doc.bibliography) by_id.emplace(e.id, &e);
    if (doc.bibliography.empty()) {
        diagnostics.warn("evaluation", doc.has_reference_section
                                           ? "reference section has no parseable entries; works counted from body markers"
                                           : "no reference section; works counted from body markers");
    }

    std::set<std::string> identities;
    for (const auto& m : markers) {
        if (!identities.insert(m.identity).second) continue;
        const BibEntry* entry = nullptr;
        std::optional<int> marker_year;
        if (m.identity.rfind("key:", 0) == 0 || m.identity.rfind("num:", 0) == 0) {
            auto it = by_id.find(m.identity.substr(4));
            if (it != by_id.end()) entry = it->second;
        } else {
            auto first = m.identity.find(':', 3);
            auto surname = m.identity.substr(3, first - 3);
            auto year = std::stoi(m.identity.substr(first + 1, 4));
            marker_year = year;
            std::vector<const BibEntry*> hits;
            for (const auto& e : doc.bibliography) {
                if (e.surname == surname && e.year == year) hits.push_back(&e);
            }
            if (hits.size() == 1) entry = hits.front();
            if (hits.size() > 1) diagnostics.warn("evaluation", "ambiguous author-year marker " + m.surface);
        }
        std::string work;
        std::optional<int> year;
        if (entry) {
            work = "bib:" + entry->id;
            year = entry->year;
        } else {
            work = m.identity;
            year = marker_year;
            if (!doc.bibliography.empty()) diagnostics.warn("evaluation", "marker " + m.surface + " has no bibliography entry");
        }
        st.cited_works.insert(work);
        st.work_years.emplace(work, year);
    }
    st.unique_markers = identities.size();
    return st;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::size_t count_references(const DocumentStats& stats) { return stats.cited_works.size(); }

double citation_density(const DocumentStats& stats) {
    if (stats.body_characters == 0) throw PreconditionError("citation density of an empty body");
    return static_cast<double>(stats.unique_markers) / static_cast<double>(stats.body_characters) * 1e4;
}

std::optional<double> recency_ratio(const DocumentStats& stats, int k, int reference_year) {
    if (k < 1) throw PreconditionError("recency window must be at least one year");
    std::size_t dated = 0;
    std::size_t recent = 0;
    for (const auto& [work, year] : stats.work_years) {
        if (!year) continue;
        ++dated;
        if (*year >= reference_year - k + 1) ++recent;
    }
    if (dated == 0) return std::nullopt;
    return static_cast<double>(recent) / static_cast<double>(dated);
}

MetricsReport compute_metrics(const DocumentStats& stats, const std::vector<int>& k_list, int reference_year) {
    MetricsReport r;
    r.nr = count_references(stats);
    r.cd = citation_density(stats);
    for (int k : k_list) r.rr[k] = recency_ratio(stats, k, reference_year);
    for (const auto& [work, year] : stats.work_years) r.undated += year ? 0 : 1;
    r.unique_markers = stats.unique_markers;
    r.body_characters = stats.body_characters;
    r.reference_year = reference_year;
    return r;
}

json MetricsReport::to_json() const {
    json rrj = json::object();
    for (const auto& [k, v] : rr) rrj["RR@" + std::to_string(k)] = v ? json(*v) : json(nullptr);
    return {{"schema_version", 1},
            {"NR", nr},
            {"CD", cd},
            {"RR", rrj},
            {"undated_references", undated},
            {"unique_markers", unique_markers},
            {"body_characters", body_characters},
            {"reference_year", reference_year}};
}

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

double JudgeScores::cqs() const { return (coverage + relevance + structure + synthesis + consistency) / 5.0; }

json JudgeScores::to_json() const {
    return {{"coverage", coverage},   {"relevance", relevance},     {"structure", structure},
            {"synthesis", synthesis}, {"consistency", consistency}, {"CQS", cqs()},
            {"explanation", explanation}};
}

JudgeScores judge_quality(const std::string& document, LlmClient& llm, Diagnostics& diagnostics) {
    if (trim(document).empty()) throw PreconditionError("judge_quality: empty document");
    auto reply = llm.complete_structured({PromptRole::Judge, {{"document", document}}});
    const auto& s = reply.value.at("scores");
    JudgeScores j;
    auto read = [&](const char* name, double& slot) {
        double v = s.at(name).get<double>();
        if (v < 1.0 || v > 5.0) {
            diagnostics.warn("evaluation", fmt::format("judge score {}={} outside [1, 5], clamped", name, v));
            v = std::clamp(v, 1.0, 5.0);
        }
        slot = v;
    };
    read("coverage", j.coverage);
    read("relevance", j.relevance);
    read("structure", j.structure);
    read("synthesis", j.synthesis);
    read("consistency", j.consistency);
    j.explanation = reply.value.value("explanation", "");
    return j;
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> comparison_cells(const std::vector<ComparisonRow>& rows, const std::vector<int>& k_list,
                                                       bool with_cqs) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> head{"System"};
    for (int k : k_list) head.push_back("RR@" + std::to_string(k));
    head.push_back("CD");
    head.push_back("NR");
    if (with_cqs) head.push_back("CQS");
    out.push_back(head);
    for (const auto& r : rows) {
        std::vector<std::string> cells{r.system};
        for (int k : k_list) {
            auto it = r.metrics.rr.find(k);
            cells.push_back(it != r.metrics.rr.end() && it->second ? fmt::format("{:.3f}", *it->second) : "n/a");
        }
        cells.push_back(fmt::format("{:.2f}", r.metrics.cd));
        cells.push_back(std::to_string(r.metrics.nr));
        if (with_cqs) cells.push_back(r.judge ? fmt::format("{:.2f}", r.judge->cqs()) : "n/a");
        out.push_back(std::move(cells));
    }
    return out;
}

bool any_judge(const std::vector<ComparisonRow>& rows) {
    return std::any_of(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.judge.has_value(); });
}

}  // namespace

std::string render_comparison_table(const std::vector<ComparisonRow>& rows, const std::vector<int>& k_list) {
    auto cells = comparison_cells(rows, k_list, any_judge(rows));
    std::string out = "| " + join(cells.front(), " | ") + " |\n|";
    out += "---|";
    for (std::size_t i = 1; i < cells.front().size(); ++i) out += "---:|";
    out += "\n";
    for (std::size_t i = 1; i < cells.size(); ++i) out += "| " + join(cells[i], " | ") + " |\n";
    return out;
}

std::string render_comparison_csv(const std::vector<ComparisonRow>& rows, const std::vector<int>& k_list) {
    std::string out;
    for (const auto& line : comparison_cells(rows, k_list, any_judge(rows))) {
        std::vector<std::string> quoted;
        for (const auto& c : line) quoted.push_back(c.find_first_of(",\"\n") == std::string::npos ? c : "\"" + replace_all(c, "\"", "\"\"") + "\"");
        out += join(quoted, ",") + "\n";
    }
    return out;
}

}  // namespace tracewrite
