#include "tracewrite/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace tracewrite {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PaperStore
// ---------------------------------------------------------------------------

const PaperRecord& PaperStore::at(const std::string& bibkey) const {
    auto it = records.find(bibkey);
    if (it == records.end()) throw UnknownBibkey(bibkey);
    return it->second;
}

std::string PaperStore::bibkey_for_paper_id(const std::string& paper_id) const {
    for (const auto& [key, rec] : records) {
        if (rec.paper_id == paper_id) return key;
    }
    return {};
}

std::vector<std::string> PaperStore::keys_with_tag(const std::string& tag) const {
    std::vector<std::string> out;
    for (const auto& [key, tags] : provenance) {
        if (tags.count(tag)) out.push_back(key);
    }
    return out;
}

bool PaperStore::has_tag(const std::string& bibkey, const std::string& tag) const {
    auto it = provenance.find(bibkey);
    return it != provenance.end() && it->second.count(tag) > 0;
}

void PaperStore::check_invariants() const {
    std::set<std::string> ids;
    for (const auto& [key, rec] : records) {
        if (rec.bibkey != key) throw Error("store: record bibkey does not match its key " + key);
        if (!ids.insert(rec.paper_id).second) throw Error("store: duplicate paper id " + rec.paper_id);
        if (rec.relevance_score && (*rec.relevance_score < 0.0 || *rec.relevance_score > 100.0)) {
            throw Error("store: relevance score out of range for " + key);
        }
    }
    for (const auto& [key, tags] : provenance) {
        if (!records.count(key)) throw Error("store: provenance for missing record " + key);
    }
}

namespace {

std::string next_free_bibkey(const PaperStore& store, const std::string& base) {
    if (!store.contains(base)) return base;
    for (char c = 'b'; c <= 'z'; ++c) {
        auto candidate = base + "-" + c;
        if (!store.contains(candidate)) return candidate;
    }
    for (int n = 27;; ++n) {
        auto candidate = base + "-" + std::to_string(n);
        if (!store.contains(candidate)) return candidate;
    }
}

void normalize(PaperRecord& r) {
    if (r.url && r.url->empty()) r.url.reset();
    if (r.full_text && r.full_text->empty()) r.full_text.reset();
    if (r.relevance_score) r.relevance_score = std::clamp(*r.relevance_score, 0.0, 100.0);
}

void merge_into(PaperRecord& existing, const PaperRecord& incoming) {
    if (incoming.full_text && !existing.full_text) existing.full_text = incoming.full_text;
    if (!existing.has_abstract() && incoming.has_abstract()) existing.abstract = incoming.abstract;
    if (!existing.year && incoming.year) existing.year = incoming.year;
    if (!existing.url && incoming.url) existing.url = incoming.url;
    if (existing.authors.empty()) existing.authors = incoming.authors;
    existing.is_review = existing.is_review || incoming.is_review;
    if (incoming.relevance_score &&
        (!existing.relevance_score || *incoming.relevance_score > *existing.relevance_score)) {
        existing.relevance_score = incoming.relevance_score;
    }
}

}  // namespace

std::vector<std::string> upsert(PaperStore& store, std::vector<PaperRecord> records, const std::string& provenance_tag) {
    std::vector<std::string> assigned;
    assigned.reserve(records.size());
    for (auto& rec : records) {
        if (trim(rec.title).empty()) throw PreconditionError("upsert: record without title");
        normalize(rec);
        std::string key = rec.paper_id.empty() ? std::string() : store.bibkey_for_paper_id(rec.paper_id);
        if (!key.empty()) {
            merge_into(store.records.at(key), rec);
        } else {
            key = (!rec.bibkey.empty() && !store.contains(rec.bibkey)) ? rec.bibkey
                                                                       : next_free_bibkey(store, make_bibkey_base(rec));
            rec.bibkey = key;
            store.records.emplace(key, std::move(rec));
        }
        if (!provenance_tag.empty()) store.provenance[key].insert(provenance_tag);
        assigned.push_back(key);
    }
    return assigned;
}

json record_to_json(const PaperRecord& r) {
    json j{{"bibkey", r.bibkey},
           {"paper_id", r.paper_id},
           {"title", r.title},
           {"abstract", r.abstract},
           {"authors", r.authors},
           {"is_review", r.is_review}};
    j["year"] = r.year ? json(*r.year) : json(nullptr);
    j["url"] = r.url ? json(*r.url) : json(nullptr);
    j["full_text"] = r.full_text ? json(*r.full_text) : json(nullptr);
    j["relevance_score"] = r.relevance_score ? json(*r.relevance_score) : json(nullptr);
    return j;
}

PaperRecord record_from_json(const json& j) {
    PaperRecord r;
    r.bibkey = j.value("bibkey", "");
    r.paper_id = j.value("paper_id", "");
    r.title = j.value("title", "");
    r.abstract = j.value("abstract", "");
    r.authors = j.value("authors", std::vector<std::string>{});
    r.is_review = j.value("is_review", false);
    if (j.contains("year") && !j["year"].is_null()) r.year = j["year"].get<int>();
    if (j.contains("url") && !j["url"].is_null()) r.url = j["url"].get<std::string>();
    if (j.contains("full_text") && !j["full_text"].is_null()) r.full_text = j["full_text"].get<std::string>();
    if (j.contains("relevance_score") && !j["relevance_score"].is_null())
        r.relevance_score = j["relevance_score"].get<double>();
    return r;
}

json store_to_json(const PaperStore& store) {
    json records = json::array();
    for (const auto& [key, rec] : store.records) {
        auto j = record_to_json(rec);
        auto it = store.provenance.find(key);
        j["provenance"] = it == store.provenance.end() ? json::array() : json(it->second);
        records.push_back(std::move(j));
    }
    return {{"records", records}};
}

PaperStore store_from_json(const json& j) {
    PaperStore store;
    for (const auto& rj : j.at("records")) {
        auto rec = record_from_json(rj);
        auto key = rec.bibkey;
        if (key.empty()) throw ParseError("stored record without bibkey", "records");
        auto tags = rj.value("provenance", std::set<std::string>{});
        if (!tags.empty()) store.provenance[key] = std::move(tags);
        store.records.emplace(key, std::move(rec));
    }
    store.check_invariants();
    return store;
}

PaperStore subset(const PaperStore& store, const std::set<std::string>& bibkeys) {
    PaperStore out;
    for (const auto& key : bibkeys) {
        out.records.emplace(key, store.at(key));
        auto it = store.provenance.find(key);
        if (it != store.provenance.end()) out.provenance.emplace(key, it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    return "\"" + replace_all(field, "\"", "\"\"") + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            // handled with the '\n'
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            field_started = false;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

const std::vector<std::string> kCsvColumns = {"bibkey", "paper_id", "title",           "abstract",   "year",
                                              "url",    "is_review", "relevance_score", "provenance", "authors"};

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fulltext_dir_name(const fs::path& csv) {
    return csv.stem().string() + "_fulltext";
}

}  // namespace

void save_csv(const PaperStore& store, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << join(kCsvColumns, ",") << "\r\n";
    const fs::path text_dir = path.parent_path() / fulltext_dir_name(path);
    for (const auto& [key, rec] : store.records) {
        std::vector<std::string> tags;
        if (auto it = store.provenance.find(key); it != store.provenance.end()) {
            tags.assign(it->second.begin(), it->second.end());
        }
        std::vector<std::string> fields = {
            rec.bibkey,
            rec.paper_id,
            rec.title,
            rec.abstract,
            rec.year ? std::to_string(*rec.year) : "",
            rec.url.value_or(""),
            rec.is_review ? "true" : "false",
            rec.relevance_score ? format_double(*rec.relevance_score) : "",
            join(tags, ";"),
            json(rec.authors).dump(),
        };
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << csv_escape(fields[i]);
        }
        out << "\r\n";
        if (rec.full_text) {
            fs::create_directories(text_dir);
            std::ofstream ft(text_dir / (key + ".txt"), std::ios::binary | std::ios::trunc);
            if (!ft) throw IoError("cannot write full text for " + key);
            ft << *rec.full_text;
        }
    }
    if (!out) throw IoError("write failed for " + path.string());
}

CsvLoadResult load_csv(const fs::path& path, Diagnostics& diagnostics) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto rows = parse_csv(buffer.str());
    if (rows.empty()) throw ParseError("empty CSV file", path.string());

    const auto& header = rows.front();
    const std::size_t width = header.size();
    if (width < 9 || !std::equal(header.begin(), header.begin() + 9, kCsvColumns.begin())) {
        throw ParseError("unexpected CSV header", path.string() + ":1");
    }

    CsvLoadResult result;
    const fs::path text_dir = path.parent_path() / fulltext_dir_name(path);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() == 1 && f[0].empty()) continue;  // blank line
        auto skip = [&](const std::string& why) {
            ++result.skipped_rows;
            diagnostics.warn("corpus", path.filename().string() + " row " + std::to_string(r + 1) + " skipped: " + why);
        };
        if (f.size() != width) {
            skip("expected " + std::to_string(width) + " fields, found " + std::to_string(f.size()));
            continue;
        }
        PaperRecord rec;
        rec.bibkey = f[0];
        rec.paper_id = f[1];
        rec.title = f[2];
        rec.abstract = f[3];
        if (rec.bibkey.empty() || rec.title.empty()) {
            skip("missing bibkey or title");
            continue;
        }
        if (result.store.contains(rec.bibkey)) {
            skip("duplicate bibkey " + rec.bibkey);
            continue;
        }
        try {
            if (!f[4].empty()) {
                std::size_t used = 0;
                rec.year = std::stoi(f[4], &used);
                if (used != f[4].size()) throw std::invalid_argument("year");
            }
            if (!f[5].empty()) rec.url = f[5];
            if (f[6] != "true" && f[6] != "false") throw std::invalid_argument("is_review");
            rec.is_review = f[6] == "true";
            if (!f[7].empty()) {
                std::size_t used = 0;
                double score = std::stod(f[7], &used);
                if (used != f[7].size() || score < 0.0 || score > 100.0) throw std::invalid_argument("relevance_score");
                rec.relevance_score = score;
            }
            if (width > 9 && !f[9].empty()) rec.authors = json::parse(f[9]).get<std::vector<std::string>>();
        } catch (const std::exception& e) {
            skip(std::string("bad field value (") + e.what() + ")");
            continue;
        }
        auto text_path = text_dir / (rec.bibkey + ".txt");
        if (fs::exists(text_path)) {
            std::ifstream ft(text_path, std::ios::binary);
            std::stringstream ts;
            ts << ft.rdbuf();
            rec.full_text = ts.str();
        }
        std::set<std::string> tags;
        if (!f[8].empty()) {
            for (auto& t : split(f[8], ';')) tags.insert(t);
        }
        auto key = rec.bibkey;
        result.store.records.emplace(key, std::move(rec));
        if (!tags.empty()) result.store.provenance.emplace(key, std::move(tags));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

std::vector<std::string> chunk_text(const std::string& text, const ChunkingOptions& options) {
    if (options.chunk_size == 0 || options.overlap >= options.chunk_size) {
        throw PreconditionError("chunking requires 0 <= overlap < chunk_size");
    }
    std::vector<std::string> chunks;
    if (text.empty()) return chunks;
    auto align = [&](std::size_t pos) {
        while (pos < text.size() && (static_cast<unsigned char>(text[pos]) & 0xC0) == 0x80) ++pos;
        return pos;
    };
    const std::size_t step = options.chunk_size - options.overlap;
    std::size_t start = 0;
    while (true) {
        std::size_t end = align(std::min(text.size(), start + options.chunk_size));
        chunks.push_back(text.substr(start, end - start));
        if (end >= text.size()) break;
        start = align(start + step);
    }
    return chunks;
}

void VectorIndex::add(IndexEntry entry) {
    if (entries_.empty()) {
        dimension_ = entry.embedding.dimension();
    } else if (entry.embedding.dimension() != dimension_) {
        throw PreconditionError("index: embedding dimension mismatch for " + entry.key);
    }
    if (by_key_.count(entry.key)) throw PreconditionError("index: duplicate key " + entry.key);
    by_key_.emplace(entry.key, entries_.size());
    entries_.push_back(std::move(entry));
}

std::vector<SearchHit> VectorIndex::search(const Embedding& query, std::size_t k,
                                           const std::set<std::string>& only) const {
    std::vector<SearchHit> hits;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!only.empty() && !only.count(entries_[i].bibkey)) continue;
        hits.push_back({i, cosine_similarity(query, entries_[i].embedding)});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) { return a.score > b.score; });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

VectorIndex build_index(const PaperStore& store, EmbeddingProvider& embedder, const ChunkingOptions& chunking,
                        const std::set<std::string>& only) {
    std::vector<IndexEntry> pending;
    for (const auto& [key, rec] : store.records) {
        if (!only.empty() && !only.count(key)) continue;
        pending.push_back({key, key, trim(rec.title + "\n\n" + rec.abstract), {}});
        if (rec.full_text) {
            auto chunks = chunk_text(*rec.full_text, chunking);
            for (std::size_t c = 0; c < chunks.size(); ++c) {
                if (trim(chunks[c]).empty()) continue;
                pending.push_back({key + "#c" + std::to_string(c), key, chunks[c], {}});
            }
        }
    }
    if (pending.empty()) throw PreconditionError("build_index: empty store");
    std::vector<std::string> texts;
    texts.reserve(pending.size());
    for (const auto& e : pending) texts.push_back(e.text);
    auto embeddings = embedder.embed(texts);
    VectorIndex index;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        pending[i].embedding = std::move(embeddings[i]);
        index.add(std::move(pending[i]));
    }
    return index;
}

// ---------------------------------------------------------------------------
// BibTeX
// ---------------------------------------------------------------------------

std::string latex_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "\\&"; break;
            case '%': out += "\\%"; break;
            case '$': out += "\\$"; break;
            case '#': out += "\\#"; break;
            case '_': out += "\\_"; break;
            case '{': out += "\\{"; break;
            case '}': out += "\\}"; break;
            case '~': out += "\\textasciitilde{}"; break;
            case '^': out += "\\textasciicircum{}"; break;
            case '\\': out += "\\textbackslash{}"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string compile_bibtex(const PaperStore& store, const std::set<std::string>& cited) {
    std::ostringstream out;
    bool first = true;
    for (const auto& key : cited) {  // std::set iterates sorted
        const auto& rec = store.at(key);
        if (!first) out << "\n";
        first = false;
        out << "@misc{" << key << ",\n";
        out << "  title = {{" << latex_escape(rec.title) << "}}";
        if (!rec.authors.empty()) {
            std::vector<std::string> escaped;
            for (const auto& a : rec.authors) escaped.push_back(latex_escape(a));
            out << ",\n  author = {" << join(escaped, " and ") << "}";
        }
        if (rec.year) out << ",\n  year = {" << *rec.year << "}";
        if (rec.url) out << ",\n  url = {" << *rec.url << "}";
        if (store.has_tag(key, provenance::kTraced)) out << ",\n  note = {Traced citation}";
        out << "\n}\n";
    }
    return out.str();
}

}  // namespace tracewrite
