#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tracewrite {

enum class MarkerKind { Numeric, AuthorYear };

std::string to_string(MarkerKind kind);

/// An in-text citation found in a passage.
///
/// Numeric markers are emitted per integer inside a bracket group, so "[3, 5]"
/// yields two markers whose surfaces are "3" and "5". Author-year markers keep
/// their parentheses when they are the only content of the parenthetical:
/// "(Ge et al., 2023)".
struct CitationMarker {
    MarkerKind kind = MarkerKind::Numeric;
    std::string surface;
    std::size_t begin = 0;  // byte offsets into the scanned text, end exclusive
    std::size_t end = 0;
    std::size_t passage = 0;  // index of the passage the marker came from
    std::string key;          // normalized identity: "n:3", "ay:ge:2023"

    bool operator==(const CitationMarker&) const = default;
};

/// Scans text for numeric and author-year citation markers. Spans never
/// overlap; repeated markers (same key) are reported once, at their first
/// occurrence. Bare years, bracketed non-integers and single-surname
/// references without "et al." or "&" are not markers.
std::vector<CitationMarker> detect_markers(std::string_view text);

/// Like detect_markers but keeps repeated occurrences.
std::vector<CitationMarker> marker_occurrences(std::string_view text);

/// Text with marker surfaces removed and whitespace tidied.
std::string strip_markers(std::string_view text);

// ---------------------------------------------------------------------------
// \cite{...} placeholders used in generated text
// ---------------------------------------------------------------------------

/// Every key of every \cite{a,b} in order of appearance (repeats included).
std::vector<std::string> cite_keys(std::string_view text);
std::set<std::string> cite_key_set(std::string_view text);
/// Renames a key inside all \cite groups.
std::string rename_cite_key(std::string_view text, const std::string& from, const std::string& to);
/// Removes the given keys from \cite groups (dropping empty groups).
std::string remove_cite_keys(std::string_view text, const std::set<std::string>& keys);
/// Removes all \cite groups.
std::string strip_cites(std::string_view text);

/// Rewrites each \cite{a,b} group with `render(keys)`.
template <typename Fn>
std::string transform_cites(std::string_view text, Fn&& render) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto at = text.find("\\cite{", pos);
        if (at == std::string_view::npos) break;
        auto close = text.find('}', at);
        if (close == std::string_view::npos) break;
        out.append(text.substr(pos, at - pos));
        std::vector<std::string> keys;
        std::string cur;
        for (char c : text.substr(at + 6, close - at - 6)) {
            if (c == ',') {
                keys.push_back(cur);
                cur.clear();
            } else if (c != ' ') {
                cur.push_back(c);
            }
        }
        keys.push_back(cur);
        std::vector<std::string> cleaned;
        for (auto& k : keys) {
            if (!k.empty()) cleaned.push_back(k);
        }
        out += render(cleaned);
        pos = close + 1;
    }
    out.append(text.substr(pos));
    return out;
}

}  // namespace tracewrite
