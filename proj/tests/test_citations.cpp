#include "support.hpp"
#include "tracewrite/citations.hpp"

#include <doctest.h>

using namespace tw_test;

namespace {

std::vector<std::pair<std::string, std::string>> summarize(const std::vector<CitationMarker>& markers) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& m : markers) out.emplace_back(to_string(m.kind), m.surface);
    return out;
}

}  // namespace

TEST_CASE("marker fixture cases") {
    auto cases = read_json(fixture("markers.json"))["cases"];
    REQUIRE(cases.size() == 25);
    for (const auto& c : cases) {
        auto text = c["text"].get<std::string>();
        CAPTURE(text);
        std::vector<std::pair<std::string, std::string>> expected;
        for (const auto& e : c["expected"]) expected.emplace_back(e["kind"], e["surface"]);
        CHECK(summarize(detect_markers(text)) == expected);
    }
}

TEST_CASE("marker spans point at their surfaces and never overlap") {
    auto cases = read_json(fixture("markers.json"))["cases"];
    for (const auto& c : cases) {
        auto text = c["text"].get<std::string>();
        auto markers = marker_occurrences(text);
        std::size_t last_end = 0;
        for (const auto& m : markers) {
            CHECK(text.substr(m.begin, m.end - m.begin) == m.surface);
            CHECK(m.begin >= last_end);
            last_end = m.end;
        }
    }
}

TEST_CASE("marker keys") {
    auto m = detect_markers("(Ge et al., 2023) and [3]");
    REQUIRE(m.size() == 2);
    CHECK(m[0].key == "ay:ge:2023");
    CHECK(m[1].key == "n:3");
}

TEST_CASE("occurrences keep repeats, detect drops them") {
    std::string text = "first [4], then Hu et al. (2021), then [4] and Hu et al. (2021) again";
    CHECK(marker_occurrences(text).size() == 4);
    CHECK(detect_markers(text).size() == 2);
}

TEST_CASE("injected markers are found in random prose") {
    Gen g(99);
    for (int round = 0; round < 200; ++round) {
        std::string text;
        std::set<std::string> expected;
        int n = g.range(0, 5);
        for (int i = 0; i < n; ++i) {
            text += g.text(2, 8) + " ";
            if (g.chance(0.5)) {
                int k = g.range(1, 60);
                text += "[" + std::to_string(k) + "] ";
                expected.insert("n:" + std::to_string(k));
            } else {
                static const char* names[] = {"Ge", "Hu", "Houlsby", "Lester", "Dettmers"};
                std::string name = names[g.next() % 5];
                int year = g.range(1990, 2025);
                text += "(" + name + " et al., " + std::to_string(year) + ") ";
                expected.insert("ay:" + to_lower(name) + ":" + std::to_string(year));
            }
        }
        text += g.text(1, 4) + ".";
        std::set<std::string> found;
        for (const auto& m : detect_markers(text)) found.insert(m.key);
        CAPTURE(text);
        CHECK(found == expected);
    }
}

TEST_CASE("strip_markers") {
    CHECK(strip_markers("Adapters work (Houlsby et al., 2019) well [3, 4].") == "Adapters work well.");
    CHECK(strip_markers("No markers here.") == "No markers here.");
}

TEST_CASE("cite helpers") {
    std::string text = "A \\cite{a,b} and \\cite{c} then \\cite{a}.";
    CHECK(cite_keys(text) == std::vector<std::string>{"a", "b", "c", "a"});
    CHECK(cite_key_set(text) == std::set<std::string>{"a", "b", "c"});
    CHECK(rename_cite_key(text, "a", "z") == "A \\cite{z,b} and \\cite{c} then \\cite{z}.");
    CHECK(cite_keys(remove_cite_keys(text, {"a", "c"})) == std::vector<std::string>{"b"});
    CHECK(strip_cites(text).find("\\cite") == std::string::npos);
    auto rendered = transform_cites(text, [](const std::vector<std::string>& keys) { return "[" + join(keys, ";") + "]"; });
    CHECK(rendered == "A [a;b] and [c] then [a].");
}
