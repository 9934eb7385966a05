#include "support.hpp"
#include "tracewrite/evaluation.hpp"

#include <doctest.h>

using namespace tw_test;

namespace {

DocumentStats stats_for(const std::string& text, const std::string& bib = "") {
    Diagnostics diag;
    return analyze_document(parse_document(text, bib), diag);
}

// Expected values of the metrics fixture, derived by the generator script
// next to it (independent character counter) and the reference years.
constexpr std::size_t kFixtureChars = 12000;
constexpr std::size_t kFixtureUnique = 9;
constexpr std::size_t kFixtureWorks = 7;

}  // namespace

TEST_CASE("metrics fixture") {
    auto stats = stats_for(read_text(fixture("metrics_survey.md")));
    CHECK(stats.body_characters == kFixtureChars);
    CHECK(stats.unique_markers == kFixtureUnique);
    CHECK(stats.cited_works.size() == kFixtureWorks);
    auto m = compute_metrics(stats, {1, 3, 5, 7, 10}, 2025);
    CHECK(m.nr == 7);
    CHECK(m.cd == doctest::Approx(kFixtureUnique * 1e4 / kFixtureChars).epsilon(1e-12));
    CHECK(m.cd == doctest::Approx(7.5));
    CHECK(*m.rr.at(1) == doctest::Approx(2.0 / 7));
    CHECK(*m.rr.at(3) == doctest::Approx(4.0 / 7));
    CHECK(*m.rr.at(5) == doctest::Approx(5.0 / 7));
    CHECK(*m.rr.at(7) == doctest::Approx(5.0 / 7));
    CHECK(*m.rr.at(10) == doctest::Approx(6.0 / 7));
    CHECK(m.undated == 0);
}

TEST_CASE("body markers cover every citation form") {
    auto markers = body_markers("A [@a; @b] and \\citep{c,d} then [4] and (Hu et al., 2021) plus Smith & Lee (2020).");
    std::vector<std::string> ids;
    for (const auto& m : markers) ids.push_back(m.identity);
    CHECK(ids == std::vector<std::string>{"key:a", "key:b", "key:c", "key:d", "num:4", "ay:hu:2021", "ay:smith:2020"});
}

TEST_CASE("numeric documents resolve through the numbered reference list") {
    std::string doc = "# T\n\nText cites [1] and [2, 3] and again [1].\n\n## References\n\n"
                      "[1] A. Smith. First work. 2020.\n[2] B. Jones. Second work. 2024.\n[3] C. Wu. Third work.\n";
    auto stats = stats_for(doc);
    CHECK(stats.unique_markers == 3);
    CHECK(stats.marker_occurrences == 4);
    CHECK(stats.cited_works.size() == 3);
    auto m = compute_metrics(stats, {1, 3}, 2024);
    CHECK(m.undated == 1);
    CHECK(*m.rr.at(1) == doctest::Approx(0.5));
}

TEST_CASE("author-year markers and unresolved markers") {
    std::string doc = "Intro (Hu et al., 2021) and Hu et al. (2021) and (Zed et al., 2019).\n\n## References\n\n"
                      "- Edward J. Hu, Yelong Shen. 2021. LoRA: Low-Rank Adaptation.\n";
    auto stats = stats_for(doc);
    CHECK(stats.unique_markers == 2);
    CHECK(stats.cited_works.size() == 2);
    auto m = compute_metrics(stats, {5}, 2021);
    CHECK(m.nr == 2);
}

TEST_CASE("latex documents with a bibtex file") {
    std::string tex = "\\documentclass{article}\\begin{document}\\section{Intro}Adapters \\cite{hu2021lora} and "
                      "\\citet{houlsby2019} matter.\n\\bibliography{refs}\n\\end{document}\n";
    std::string bib = "@article{hu2021lora, title={LoRA}, author={Hu, Edward and Shen, Yelong}, year={2021}}\n"
                      "@inproceedings{houlsby2019, title = \"Adapters\", author = {Houlsby, Neil}, year = 2019}\n";
    auto entries = parse_bibtex(bib);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].id == "hu2021lora");
    CHECK(entries[0].surname == "hu");
    CHECK(entries[1].year == 2019);
    auto parsed = parse_document(tex, bib);
    CHECK(parsed.has_reference_section);
    auto stats = stats_for(tex, bib);
    CHECK(stats.cited_works.size() == 2);
    CHECK(visible_text(parsed.body).find("\\cite") == std::string::npos);
    auto m = compute_metrics(stats, {2, 3}, 2021);
    CHECK(*m.rr.at(2) == doctest::Approx(0.5));
    CHECK(*m.rr.at(3) == doctest::Approx(1.0));
}

TEST_CASE("character counting") {
    CHECK(body_character_count("Zürich\nab") == 8);
    CHECK(body_character_count("**bold** [@k] text") == std::string("bold text").size());
    CHECK(body_character_count("## Heading") == 7);
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_document(""), ParseError);
    CHECK_THROWS_AS(parse_document("   \n"), ParseError);
    CHECK_THROWS_AS(parse_document(std::string("text\0more", 9)), ParseError);
    try {
        parse_document("fine\nbad \xff byte");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK_FALSE(e.location().empty());
    }
}

TEST_CASE("metric preconditions") {
    DocumentStats empty;
    CHECK_THROWS_AS(citation_density(empty), PreconditionError);
    auto stats = stats_for("No citations at all here.");
    CHECK(count_references(stats) == 0);
    CHECK_FALSE(recency_ratio(stats, 5, 2025).has_value());
    CHECK_THROWS_AS(recency_ratio(stats, 0, 2025), PreconditionError);
}

TEST_CASE("judge CQS is the mean of the five scores") {
    Diagnostics diag;
    MockCompletionBackend backend(1, MockLlmOptions{false, std::array<double, 5>{4.0, 3.5, 5.0, 2.0, 4.5}});
    ProviderConfig cfg;
    cfg.backoff_ms = 0;
    LlmClient llm(backend, cfg, diag);
    auto j = judge_quality("A document.", llm, diag);
    CHECK(std::abs(j.cqs() - (4.0 + 3.5 + 5.0 + 2.0 + 4.5) / 5.0) <= 1e-12);
    CHECK(j.to_json()["CQS"].get<double>() == j.cqs());
}

TEST_CASE("judge scores are clamped and malformed replies rejected") {
    Diagnostics diag;
    MockCompletionBackend backend(1);
    ProviderConfig cfg;
    cfg.backoff_ms = 0;
    cfg.max_retries = 1;
    LlmClient llm(backend, cfg, diag);
    backend.script(PromptRole::Judge, {MockReply::with_text(R"({"scores": {"coverage": 7, "relevance": 0, "structure": 3, "synthesis": 3, "consistency": 3}})")});
    auto j = judge_quality("Doc.", llm, diag);
    CHECK(j.coverage == 5.0);
    CHECK(j.relevance == 1.0);
    CHECK(diag.count("evaluation") == 2);
    backend.script(PromptRole::Judge, {MockReply::with_text("{}"), MockReply::with_text(R"({"scores": {"coverage": 3}})")});
    CHECK_THROWS_AS(judge_quality("Doc.", llm, diag), SchemaViolation);
    CHECK_THROWS_AS(judge_quality("  ", llm, diag), PreconditionError);
}

TEST_CASE("comparison table columns") {
    auto stats = stats_for(read_text(fixture("metrics_survey.md")));
    std::vector<int> ks{1, 3, 5, 7, 10};
    ComparisonRow row{"ours", compute_metrics(stats, ks, 2025), std::nullopt};
    auto table = render_comparison_table({row}, ks);
    auto header = table.substr(0, table.find('\n'));
    CHECK(header == "| System | RR@1 | RR@3 | RR@5 | RR@7 | RR@10 | CD | NR |");
    CHECK(table.find("| ours | 0.286 | 0.571 | 0.714 | 0.714 | 0.857 | 7.50 | 7 |") != std::string::npos);

    JudgeScores js{4, 4, 4, 4, 3, ""};
    ComparisonRow judged{"judged", row.metrics, js};
    auto with_cqs = render_comparison_table({row, judged}, ks);
    CHECK(with_cqs.substr(0, with_cqs.find('\n')) == "| System | RR@1 | RR@3 | RR@5 | RR@7 | RR@10 | CD | NR | CQS |");
    CHECK(with_cqs.find("| 7 | 3.80 |") != std::string::npos);
    CHECK(with_cqs.find("| 7 | n/a |") != std::string::npos);
    auto csv = render_comparison_csv({row}, ks);
    CHECK(csv.substr(0, csv.find('\n')) == "System,RR@1,RR@3,RR@5,RR@7,RR@10,CD,NR");
}

TEST_CASE("metrics report json") {
    auto stats = stats_for(read_text(fixture("metrics_survey.md")));
    auto j = compute_metrics(stats, {1, 10}, 2025).to_json();
    CHECK(j["NR"] == 7);
    CHECK(j["reference_year"] == 2025);
}
