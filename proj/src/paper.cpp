#include "tracewrite/paper.hpp"

#include "tracewrite/common.hpp"

#include <cctype>

namespace tracewrite {

bool PaperRecord::has_abstract() const {
    return !trim(abstract).empty();
}

const std::string& PaperRecord::best_text() const {
    if (full_text && !full_text->empty()) return *full_text;
    return abstract;
}

bool detect_review(const std::vector<std::string>& publication_types, std::string_view title) {
    if (!publication_types.empty()) {
        for (const auto& t : publication_types) {
            auto lt = to_lower(t);
            if (lt == "review" || lt == "survey" || lt == "systematicreview" || lt == "meta-analysis" ||
                lt == "metaanalysis")
                return true;
        }
        return false;
    }
    for (const auto& tok : tokenize(title)) {
        if (tok == "survey" || tok == "surveys" || tok == "review" || tok == "reviews") return true;
    }
    return false;
}

std::string author_surname(std::string_view author) {
    auto a = trim(author);
    if (a.empty()) return {};
    auto comma = a.find(',');
    if (comma != std::string::npos) return trim(std::string_view(a).substr(0, comma));
    auto space = a.find_last_of(' ');
    if (space == std::string::npos) return a;
    return a.substr(space + 1);
}

namespace {

std::string ascii_alnum_lower(std::string_view s) {
    std::string out;
    for (char ch : s) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace

std::string make_bibkey_base(const PaperRecord& record) {
    std::string author = record.authors.empty() ? std::string() : ascii_alnum_lower(author_surname(record.authors.front()));
    if (author.empty()) author = "anon";
    std::string year = record.year ? std::to_string(*record.year) : "nd";
    std::string word;
    for (const auto& tok : tokenize(record.title)) {
        if (is_stopword(tok)) continue;
        word = ascii_alnum_lower(tok);
        if (!word.empty()) break;
    }
    if (word.empty()) word = "untitled";
    return author + year + word;
}

}  // namespace tracewrite
