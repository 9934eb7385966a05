#include "support.hpp"

#include <doctest.h>

using namespace tw_test;

TEST_CASE("bibkey base") {
    CHECK(make_bibkey_base(paper("x", "LoRA: Low-Rank Adaptation", "", 2021, {"Edward J. Hu"})) == "hu2021lora");
    CHECK(make_bibkey_base(paper("x", "The Power of Scale", "", 2021, {"Brian Lester"})) == "lester2021power");
    CHECK(make_bibkey_base(paper("x", "Untitled Work", "", std::nullopt, {})) == "anonnduntitled");
    CHECK(author_surname("Hu, Edward") == "Hu");
}

TEST_CASE("upsert assigns keys, suffixes collisions and merges by paper id") {
    PaperStore store;
    auto k1 = upsert(store, {paper("p1", "Adapter Tuning", "a", 2020, {"Ann Smith"})}, provenance::kSurveyLevel);
    auto k2 = upsert(store, {paper("p2", "Adapter Layers", "b", 2020, {"Bob Smith"})}, provenance::kSurveyLevel);
    REQUIRE(k1 == std::vector<std::string>{"smith2020adapter"});
    CHECK(k2 == std::vector<std::string>{"smith2020adapter-b"});

    auto richer = paper("p1", "Adapter Tuning", "a", 2020, {"Ann Smith"});
    richer.full_text = "Full body.";
    richer.url = "https://example.org/p1";
    auto k3 = upsert(store, {richer}, provenance::subsection("1.1"));
    CHECK(k3 == k1);
    CHECK(store.size() == 2);
    CHECK(store.at(k1[0]).full_text == std::optional<std::string>("Full body."));
    CHECK(store.at(k1[0]).url.has_value());
    CHECK(store.has_tag(k1[0], provenance::kSurveyLevel));
    CHECK(store.has_tag(k1[0], provenance::subsection("1.1")));
    CHECK(store.bibkey_for_paper_id("p2") == "smith2020adapter-b");
    CHECK_NOTHROW(store.check_invariants());
    CHECK_THROWS_AS(store.at("missing"), UnknownBibkey);
}

TEST_CASE("upsert property: keys unique, one record per paper id") {
    Gen g(5);
    for (int round = 0; round < 50; ++round) {
        PaperStore store;
        std::set<std::string> ids;
        for (int batch = 0; batch < 4; ++batch) {
            std::vector<PaperRecord> recs;
            int n = g.range(1, 6);
            for (int i = 0; i < n; ++i) {
                auto id = "p" + std::to_string(g.range(0, 12));
                ids.insert(id);
                recs.push_back(paper(id, g.text(2, 5), g.text(0, 6), g.range(2018, 2024), {"Ann Smith"}));
            }
            auto keys = upsert(store, recs, provenance::kSurveyLevel);
            REQUIRE(keys.size() == recs.size());
            for (std::size_t i = 0; i < keys.size(); ++i) CHECK(store.at(keys[i]).paper_id == recs[i].paper_id);
        }
        CHECK(store.size() == ids.size());
        CHECK_NOTHROW(store.check_invariants());
    }
}

TEST_CASE("csv escaping and parsing") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    auto rows = parse_csv("a,\"b,c\",\"multi\nline\"\n1,2,3\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "multi\nline"});
    CHECK(rows[1] == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("csv round trip keeps every field") {
    TempDir dir("csv");
    PaperStore store;
    auto a = paper("p1", "Title, with \"quotes\"", "Abstract\nover lines", 2021, {"Edward J. Hu", "Yelong Shen"});
    a.url = "https://example.org/a";
    a.relevance_score = 87.5;
    a.full_text = "Body text of the paper.";
    auto b = paper("p2", "Survey of things", "", std::nullopt, {});
    b.is_review = true;
    upsert(store, {a, b}, provenance::kSurveyLevel);
    upsert(store, {b}, provenance::kTraced);
    save_csv(store, dir.path / "papers.csv");
    CHECK(std::filesystem::exists(dir.path / "papers_fulltext"));
    Diagnostics diag;
    auto loaded = load_csv(dir.path / "papers.csv", diag);
    CHECK(loaded.skipped_rows == 0);
    CHECK(loaded.store == store);
}

TEST_CASE("csv loader skips malformed rows") {
    TempDir dir("csvbad");
    PaperStore store;
    upsert(store, {paper("p1", "Good one"), paper("p2", "Good two")}, provenance::kSurveyLevel);
    save_csv(store, dir.path / "papers.csv");
    {
        std::ofstream out(dir.path / "papers.csv", std::ios::app);
        out << "broken,row\n";
    }
    Diagnostics diag;
    auto loaded = load_csv(dir.path / "papers.csv", diag);
    CHECK(loaded.skipped_rows == 1);
    CHECK(loaded.store.size() == 2);
    CHECK(diag.count() >= 1);
}

TEST_CASE("store json round trip") {
    PaperStore store;
    auto a = paper("p1", "A");
    a.full_text = "x";
    upsert(store, {a, paper("p2", "B", "", std::nullopt)}, provenance::kTraced);
    CHECK(store_from_json(json::parse(store_to_json(store).dump())) == store);
}

TEST_CASE("chunking windows") {
    std::string text(2200, 'x');
    auto chunks = chunk_text(text, {1000, 200});
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].size() == 1000);
    CHECK(chunks[1].size() == 1000);
    CHECK(chunks[2].size() == 600);
    CHECK(chunk_text("short", {1000, 200}) == std::vector<std::string>{"short"});
    CHECK(chunk_text("", {1000, 200}).empty());
    CHECK_THROWS_AS(chunk_text("abc", {100, 100}), PreconditionError);
}

TEST_CASE("chunking covers the text and respects utf-8") {
    Gen g(3);
    for (int round = 0; round < 100; ++round) {
        std::string text;
        int n = g.range(1, 400);
        for (int i = 0; i < n; ++i) text += g.chance(0.2) ? "ü" : g.word();
        std::size_t size = static_cast<std::size_t>(g.range(20, 200));
        std::size_t overlap = static_cast<std::size_t>(g.range(0, static_cast<int>(size) - 1));
        auto chunks = chunk_text(text, {size, overlap});
        REQUIRE(!chunks.empty());
        CHECK(text.rfind(chunks.back()) + chunks.back().size() == text.size());
        CHECK(text.find(chunks.front()) == 0);
        for (const auto& c : chunks) {
            CHECK(utf8_invalid_offset(c) == std::string::npos);
            CHECK(text.find(c) != std::string::npos);
        }
    }
}

TEST_CASE("build_index: abstract entries plus chunks") {
    PaperStore store;
    auto full = paper("p1", "Adapters");
    full.full_text = std::string(2200, 'a');
    upsert(store, {full, paper("p2", "Prompts")}, provenance::kSurveyLevel);
    HashingEmbedder emb(1);
    auto index = build_index(store, emb, {1000, 200});
    CHECK(index.size() == 5);
    auto only = build_index(store, emb, {1000, 200}, {store.bibkey_for_paper_id("p2")});
    CHECK(only.size() == 1);
    CHECK(index.dimension() == 384);
}

TEST_CASE("vector search ordering") {
    VectorIndex index;
    index.add({"a", "a", "t", Embedding{{1, 0}}});
    index.add({"b", "b", "t", Embedding{{0.6, 0.8}}});
    index.add({"c", "c", "t", Embedding{{1, 0}}});
    index.add({"d", "d", "t", Embedding{{0, 1}}});
    auto hits = index.search(Embedding{{1, 0}}, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].entry == 0);
    CHECK(hits[1].entry == 2);
    CHECK(hits[2].entry == 1);
    auto filtered = index.search(Embedding{{1, 0}}, 3, {"b", "d"});
    REQUIRE(filtered.size() == 2);
    CHECK(filtered[0].entry == 1);
    CHECK_THROWS_AS(index.add({"e", "e", "t", Embedding{{1, 0, 0}}}), PreconditionError);
}

TEST_CASE("bibtex compilation") {
    PaperStore store;
    auto a = paper("p1", "Low-Rank & Sparse {Updates}", "", 2021, {"Edward J. Hu", "Yelong Shen"});
    a.url = "https://example.org/a";
    upsert(store, {a, paper("p2", "Undated Note", "", std::nullopt, {})}, provenance::kSurveyLevel);
    auto bib = compile_bibtex(store, {"hu2021low", "anonndundated"});
    CHECK(bib.find("@misc{anonndundated,") < bib.find("@misc{hu2021low,"));
    CHECK(bib.find("author = {Edward J. Hu and Yelong Shen}") != std::string::npos);
    CHECK(bib.find("Low-Rank \\& Sparse") != std::string::npos);
    CHECK(bib.find("year = {2021}") != std::string::npos);
    auto no_year = bib.substr(bib.find("@misc{anonndundated,"), bib.find("@misc{hu2021low,") - bib.find("@misc{anonndundated,"));
    CHECK(no_year.find("year") == std::string::npos);
    CHECK(no_year.find("author") == std::string::npos);
    CHECK_THROWS_AS(compile_bibtex(store, {"ghost"}), UnknownBibkey);
}
