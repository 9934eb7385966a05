#include "tracewrite/citations.hpp"

#include "tracewrite/common.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace tracewrite {

std::string to_string(MarkerKind kind) {
    return kind == MarkerKind::Numeric ? "numeric" : "author-year";
}

namespace {

// Bracketed integer lists and ranges: [17], [3, 5], [12-14], [12–14].
const std::regex& numeric_group_re() {
    static const std::regex re(R"(\[\s*\d+(?:\s*(?:,|;|-|\xE2\x80\x93)\s*\d+)*\s*\])");
    return re;
}

// Surname(s) + "et al." or "&"/"and" + 4-digit year, year optionally in
// parentheses.
const std::regex& author_year_re() {
    static const std::string name = R"((?:(?:van|von|de|der|den|di|da|le|la|du)\s+)*[A-Z][A-Za-z'\-]+)";
    static const std::string year = R"((?:19|20)\d{2}[a-z]?)";
    static const std::regex re("(" + name + ")(?:\\s+et\\s+al\\.?|\\s+(?:&|and)\\s+" + name + ")\\s*,?\\s*(?:\\(\\s*(" +
                               year + ")\\s*\\)|(" + year + "))");
    return re;
}

struct RawSpan {
    std::size_t begin;
    std::size_t end;
    CitationMarker marker;
    std::size_t group_begin;  // whole bracket group or parenthetical, for stripping
    std::size_t group_end;
};

std::vector<RawSpan> scan(std::string_view text) {
    std::vector<RawSpan> spans;
    const std::string s(text);

    for (auto it = std::sregex_iterator(s.begin(), s.end(), numeric_group_re()); it != std::sregex_iterator(); ++it) {
        const auto gb = static_cast<std::size_t>(it->position());
        const auto ge = gb + static_cast<std::size_t>(it->length());
        std::size_t i = gb;
        while (i < ge) {
            if (std::isdigit(static_cast<unsigned char>(s[i]))) {
                std::size_t j = i;
                while (j < ge && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
                CitationMarker m;
                m.kind = MarkerKind::Numeric;
                m.begin = i;
                m.end = j;
                m.surface = s.substr(i, j - i);
                m.key = "n:" + std::to_string(std::stoll(m.surface));
                spans.push_back({i, j, m, gb, ge});
                i = j;
            } else {
                ++i;
            }
        }
    }

    for (auto it = std::sregex_iterator(s.begin(), s.end(), author_year_re()); it != std::sregex_iterator(); ++it) {
        auto b = static_cast<std::size_t>(it->position());
        auto e = b + static_cast<std::size_t>(it->length());
        if (b > 0 && std::isalpha(static_cast<unsigned char>(s[b - 1]))) continue;
        const auto& m0 = *it;
        std::string surname = m0[1].str();
        if (auto sp = surname.find_last_of(' '); sp != std::string::npos) surname = surname.substr(sp + 1);
        const std::string year = m0[2].matched ? m0[2].str() : m0[3].str();

        // Extend over enclosing parentheses when the item is alone inside them.
        std::size_t pb = b;
        while (pb > 0 && s[pb - 1] == ' ') --pb;
        std::size_t pe = e;
        while (pe < s.size() && s[pe] == ' ') ++pe;
        std::size_t gb = b;
        std::size_t ge = e;
        if (pb > 0 && s[pb - 1] == '(' && pe < s.size() && s[pe] == ')') {
            b = pb - 1;
            e = pe + 1;
            gb = b;
            ge = e;
        } else {
            // Part of a "(A et al., 2020; B & C, 2021)" list: strip the whole group.
            auto open = s.rfind('(', b);
            auto close = s.find(')', e);
            if (open != std::string::npos && close != std::string::npos &&
                s.find(')', open) >= e && s.find('(', e) > close && close - open < 400) {
                gb = open;
                ge = close + 1;
            }
        }
        CitationMarker m;
        m.kind = MarkerKind::AuthorYear;
        m.begin = b;
        m.end = e;
        m.surface = s.substr(b, e - b);
        m.key = "ay:" + to_lower(surname) + ":" + to_lower(year);
        spans.push_back({b, e, m, gb, ge});
    }

    std::sort(spans.begin(), spans.end(), [](const RawSpan& a, const RawSpan& b) {
        return a.begin != b.begin ? a.begin < b.begin : a.end > b.end;
    });
    std::vector<RawSpan> kept;
    for (auto& sp : spans) {
        if (!kept.empty() && sp.begin < kept.back().end) continue;
        kept.push_back(std::move(sp));
    }
    return kept;
}

}  // namespace

std::vector<CitationMarker> detect_markers(std::string_view text) {
    std::vector<CitationMarker> out;
    std::set<std::string> seen;
    for (auto& sp : scan(text)) {
        if (!seen.insert(sp.marker.key).second) continue;
        out.push_back(std::move(sp.marker));
    }
    return out;
}

std::vector<CitationMarker> marker_occurrences(std::string_view text) {
    std::vector<CitationMarker> out;
    for (auto& sp : scan(text)) out.push_back(std::move(sp.marker));
    return out;
}

std::string strip_markers(std::string_view text) {
    auto spans = scan(text);
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (const auto& sp : spans) groups.emplace_back(sp.group_begin, sp.group_end);
    std::sort(groups.begin(), groups.end());
    std::string out;
    std::size_t pos = 0;
    for (const auto& [b, e] : groups) {
        if (b < pos) {
            pos = std::max(pos, e);
            continue;
        }
        out.append(text.substr(pos, b - pos));
        pos = e;
    }
    out.append(text.substr(pos));
    static const std::regex empty_parens(R"(\(\s*[;,]?\s*\))");
    out = std::regex_replace(out, empty_parens, "");
    static const std::regex spaces(R"([ \t]{2,})");
    out = std::regex_replace(out, spaces, " ");
    static const std::regex space_punct(R"( ([.,;:]))");
    out = std::regex_replace(out, space_punct, "$1");
    return trim(out);
}

std::vector<std::string> cite_keys(std::string_view text) {
    std::vector<std::string> keys;
    transform_cites(text, [&](const std::vector<std::string>& group) {
        keys.insert(keys.end(), group.begin(), group.end());
        return std::string();
    });
    return keys;
}

std::set<std::string> cite_key_set(std::string_view text) {
    auto v = cite_keys(text);
    return {v.begin(), v.end()};
}

std::string rename_cite_key(std::string_view text, const std::string& from, const std::string& to) {
    return transform_cites(text, [&](const std::vector<std::string>& group) {
        std::vector<std::string> renamed;
        for (const auto& k : group) renamed.push_back(k == from ? to : k);
        return "\\cite{" + join(renamed, ",") + "}";
    });
}

std::string remove_cite_keys(std::string_view text, const std::set<std::string>& keys) {
    auto out = transform_cites(text, [&](const std::vector<std::string>& group) {
        std::vector<std::string> kept;
        for (const auto& k : group) {
            if (!keys.count(k)) kept.push_back(k);
        }
        return kept.empty() ? std::string() : "\\cite{" + join(kept, ",") + "}";
    });
    return replace_all(replace_all(out, " .", "."), "  ", " ");
}

std::string strip_cites(std::string_view text) {
    auto out = transform_cites(text, [](const std::vector<std::string>&) { return std::string(); });
    return replace_all(replace_all(out, " .", "."), "  ", " ");
}

}  // namespace tracewrite
