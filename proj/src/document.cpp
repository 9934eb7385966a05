#include "tracewrite/document.hpp"

#include "tracewrite/citations.hpp"

namespace tracewrite {

namespace {

/// Applies `plain` to the text between \cite groups and `cite` to each group.
template <typename Plain, typename Cite>
std::string render_segments(const std::string& text, Plain&& plain, Cite&& cite) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto at = text.find("\\cite{", pos);
        auto close = at == std::string::npos ? std::string::npos : text.find('}', at);
        if (close == std::string::npos) break;
        out += plain(text.substr(pos, at - pos));
        out += transform_cites(text.substr(at, close - at + 1), cite);
        pos = close + 1;
    }
    out += plain(text.substr(pos));
    return out;
}

std::string identity(const std::string& s) { return s; }

std::string md_cell(const std::string& s) { return replace_all(replace_all(s, "|", "\\|"), "\n", " "); }

}  // namespace

std::set<std::string> SurveyDocument::cited() const {
    std::set<std::string> keys;
    for (const auto& sec : sections) {
        for (const auto& sub : sec.subsections) {
            auto k = cite_key_set(sub.text);
            keys.insert(k.begin(), k.end());
        }
    }
    for (const auto& [id, t] : tables) keys.insert(t.cited.begin(), t.cited.end());
    return keys;
}

void SurveyDocument::validate(const PaperStore& store) const {
    for (const auto& k : cited()) {
        if (!store.contains(k)) throw Error("citation " + k + " has no bibliography record");
    }
}

std::string reference_text(const PaperRecord& r) {
    std::string authors;
    if (r.authors.empty()) {
        authors = "Anonymous";
    } else {
        std::vector<std::string> shown(r.authors.begin(), r.authors.begin() + static_cast<long>(std::min<std::size_t>(3, r.authors.size())));
        authors = join(shown, ", ");
        if (r.authors.size() > 3) authors += " et al.";
    }
    std::string out = authors + " (" + (r.year ? std::to_string(*r.year) : std::string("n.d.")) + "). " + trim(r.title);
    if (!out.empty() && out.back() != '.' && out.back() != '?' && out.back() != '!') out += ".";
    if (r.url) out += " " + *r.url;
    return out;
}

std::string render_markdown(const SurveyDocument& doc, const PaperStore& store) {
    doc.validate(store);
    auto cite = [&](const std::vector<std::string>& keys) {
        std::string out;
        for (const auto& k : keys) out += "[@" + k + "]" + (doc.is_traced(k) ? "*" : "");
        return out;
    };
    std::string out = "# " + doc.title + "\n";
    std::size_t table_no = 0;
    for (const auto& sec : doc.sections) {
        out += "\n## " + sec.title + "\n";
        for (const auto& sub : sec.subsections) {
            out += "\n### " + sub.title + "\n\n" + render_segments(sub.text, identity, cite) + "\n";
            auto t = doc.tables.find(sub.id);
            if (t == doc.tables.end()) continue;
            const auto& table = t->second;
            out += "\nTable " + std::to_string(++table_no) + ": " + table.caption + "\n\n|";
            for (const auto& c : table.columns) out += " " + md_cell(c) + " |";
            out += "\n|";
            for (std::size_t i = 0; i < table.columns.size(); ++i) out += "---|";
            out += "\n";
            for (const auto& row : table.rows) {
                out += "|";
                for (const auto& c : row) out += " " + md_cell(render_segments(c, identity, cite)) + " |";
                out += "\n";
            }
        }
    }
    out += "\n## References\n\n";
    for (const auto& k : doc.cited()) {
        out += "- [" + k + "]" + (doc.is_traced(k) ? "*" : "") + " " + reference_text(store.at(k));
        if (doc.is_traced(k)) {
            const auto& from = doc.traced_from.at(k);
            out += " Traced from " + join({from.begin(), from.end()}, ", ") + ".";
        }
        out += "\n";
    }
    return out;
}

std::string render_latex(const SurveyDocument& doc, const PaperStore& store, const std::string& bib_name) {
    doc.validate(store);
    auto esc = [](const std::string& s) { return latex_escape(s); };
    auto cite = [&](const std::vector<std::string>& keys) {
        std::string out;
        for (const auto& k : keys) out += "\\cite{" + k + "}" + (doc.is_traced(k) ? "$^{*}$" : "");
        return out;
    };
    std::string out =
        "\\documentclass{article}\n"
        "\\usepackage[utf8]{inputenc}\n"
        "\\usepackage{booktabs}\n"
        "\\title{" + latex_escape(doc.title) + "}\n"
        "\\date{}\n"
        "\\begin{document}\n"
        "\\maketitle\n";
    for (const auto& sec : doc.sections) {
        out += "\n\\section{" + latex_escape(sec.title) + "}\n";
        for (const auto& sub : sec.subsections) {
            out += "\n\\subsection{" + latex_escape(sub.title) + "}\n\n" + render_segments(sub.text, esc, cite) + "\n";
            auto t = doc.tables.find(sub.id);
            if (t == doc.tables.end()) continue;
            const auto& table = t->second;
            out += "\n\\begin{table}[h]\n\\centering\n\\caption{" + latex_escape(table.caption) + "}\n\\begin{tabular}{l";
            for (std::size_t i = 1; i < table.columns.size(); ++i) out += "l";
            out += "}\n\\toprule\n";
            std::vector<std::string> head;
            for (const auto& c : table.columns) head.push_back(latex_escape(c));
            out += join(head, " & ") + " \\\\\n\\midrule\n";
            for (const auto& row : table.rows) {
                std::vector<std::string> cells;
                for (const auto& c : row) cells.push_back(render_segments(c, esc, cite));
                out += join(cells, " & ") + " \\\\\n";
            }
            out += "\\bottomrule\n\\end{tabular}\n\\end{table}\n";
        }
    }
    out += "\n\\bibliographystyle{plain}\n\\bibliography{" + bib_name + "}\n\\end{document}\n";
    return out;
}

}  // namespace tracewrite
