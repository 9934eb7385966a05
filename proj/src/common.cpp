#include "tracewrite/common.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>
#include <unordered_set>

namespace tracewrite {

void Diagnostics::warn(std::string component, std::string message) {
    std::lock_guard lock(mutex_);
    if (echo_) {
        std::cerr << "warning [" << component << "] " << message << '\n';
    }
    warnings_.push_back({std::move(component), std::move(message)});
}

std::vector<Warning> Diagnostics::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

std::size_t Diagnostics::count() const {
    std::lock_guard lock(mutex_);
    return warnings_.size();
}

std::size_t Diagnostics::count(std::string_view component) const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count_if(
        warnings_.begin(), warnings_.end(), [&](const Warning& w) { return w.component == component; }));
}

void Diagnostics::clear() {
    std::lock_guard lock(mutex_);
    warnings_.clear();
}

std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    return to_lower(s.substr(0, prefix.size())) == to_lower(prefix);
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : s) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

bool is_stopword(std::string_view token) {
    static const std::unordered_set<std::string_view> kStop = {
        "a",     "an",    "the",   "and",   "or",    "of",    "in",    "on",    "for",   "to",
        "with",  "by",    "from",  "at",    "as",    "is",    "are",   "was",   "were",  "be",
        "been",  "this",  "that",  "these", "those", "it",    "its",   "their", "we",    "our",
        "us",    "which", "into",  "over",  "under", "than",  "such",  "via",   "can",   "also",
        "has",   "have",  "not",   "but",   "how",   "what",  "when",  "while", "both",  "each",
        "other", "more",  "most",  "new",   "using", "used",  "use",   "based", "between", "across",
        "within", "about", "they", "them",  "do",    "does",  "s",     "et",    "al",    "i",
        "e",     "g",     "here",  "there", "then",  "so",    "some",  "any",   "all",   "may",
        "will",  "would", "should", "could", "one",  "two",   "three", "section", "subsection",
        "discusses", "explores", "investigates", "overview", "toward", "towards", "upon", "without"};
    return kStop.count(token) > 0;
}

std::vector<std::string> content_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (auto& t : tokenize(s)) {
        if (is_stopword(t)) continue;
        if (t.size() > 3 && t.back() == 's' && t[t.size() - 2] != 's') t.pop_back();
        if (is_stopword(t)) continue;
        out.push_back(std::move(t));
    }
    return out;
}

std::set<std::string> content_token_set(std::string_view s) {
    auto v = content_tokens(s);
    return {v.begin(), v.end()};
}

std::string normalize_title(std::string_view s) {
    return join(tokenize(s), " ");
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur.push_back(text[i]);
        char c = text[i];
        bool boundary = (c == '.' || c == '!' || c == '?') &&
                        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
        // "et al." and single-letter initials are not sentence ends.
        if (boundary && c == '.') {
            auto tail = trim(cur);
            if (tail.size() >= 6 && tail.compare(tail.size() - 6, 6, "et al.") == 0) boundary = false;
            if (tail.size() >= 4 && (tail.compare(tail.size() - 4, 4, "e.g.") == 0 ||
                                     tail.compare(tail.size() - 4, 4, "i.e.") == 0))
                boundary = false;
        }
        if (boundary) {
            auto t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        }
    }
    auto t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size();) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0 && c < 0xF8) len = 4;
        else if (c >= 0xE0) len = (c < 0xF0) ? 3 : 1;
        else if (c >= 0xC0) len = 2;
        if (i + len > s.size()) len = 1;
        i += len;
        ++n;
    }
    return n;
}

std::size_t utf8_invalid_offset(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        if (c < 0x80) len = 1;
        else if (c >= 0xC2 && c <= 0xDF) len = 2;
        else if (c >= 0xE0 && c <= 0xEF) len = 3;
        else if (c >= 0xF0 && c <= 0xF4) len = 4;
        else return i;
        if (i + len > s.size()) return i;
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return i;
        }
        i += len;
    }
    return std::string_view::npos;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::string_view data) {
    return splitmix64(fnv1a64(data, 0xcbf29ce484222325ULL ^ splitmix64(seed)));
}

}  // namespace tracewrite
