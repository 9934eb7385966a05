#include "tracewrite/http_providers.hpp"

#include <httplib.h>
#include <zlib.h>

#include <cstdlib>
#include <thread>

namespace tracewrite {

namespace {

constexpr const char* kPaperFields = "paperId,title,abstract,authors,year,url,publicationTypes";

std::string strip_slash(std::string s) {
    while (!s.empty() && s.back() == '/') s.pop_back();
    return s;
}

}  // namespace

std::string resolve_credential(const ProviderConfig& config) {
    if (!config.credential.empty()) return config.credential;
    if (config.credential_env.empty()) return {};
    const char* v = std::getenv(config.credential_env.c_str());
    return v ? std::string(v) : std::string();
}

std::string url_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(const ProviderConfig& config) : config_(config), credential_(resolve_credential(config)) {
    auto url = strip_slash(config.endpoint);
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + config.endpoint);
    auto slash = url.find('/', scheme + 3);
    origin_ = url.substr(0, slash);
    base_path_ = slash == std::string::npos ? "" : url.substr(slash);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin_.rfind("https://", 0) == 0) throw ConfigError("built without TLS support: " + config.endpoint);
#endif
}

json HttpTransport::finish(const std::string& what, int status, const std::string& body, bool transport_error,
                           bool timed_out) {
    if (timed_out) throw TimeoutError(what + ": request timed out");
    if (transport_error) throw BackendUnreachable(what + ": cannot reach " + origin_);
    if (status == 429) throw RateLimited(what + ": rate limited");
    if (status == 404) throw UnknownPaperId(what + ": not found");
    if (status >= 500) throw BackendUnreachable(what + ": server error " + std::to_string(status));
    if (status < 200 || status >= 300)
        throw ProviderError(what + ": HTTP " + std::to_string(status) + ": " + body.substr(0, 200));
    try {
        return json::parse(body);
    } catch (const json::exception&) {
        throw ProviderError(what + ": response is not JSON");
    }
}

namespace {

httplib::Headers headers_for(const std::string& credential, bool scholarly) {
    httplib::Headers h;
    if (credential.empty()) return h;
    if (scholarly) {
        h.emplace("x-api-key", credential);
    } else {
        h.emplace("Authorization", "Bearer " + credential);
    }
    return h;
}

void configure(httplib::Client& cli, double timeout_seconds) {
    auto secs = static_cast<time_t>(timeout_seconds);
    auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    cli.set_follow_location(true);
}

}  // namespace

json HttpTransport::post_json(const std::string& path, const json& body) {
    httplib::Client cli(origin_);
    configure(cli, config_.timeout_seconds);
    auto res = cli.Post(base_path_ + path, headers_for(credential_, false), body.dump(), "application/json");
    bool timed_out = !res && res.error() == httplib::Error::Read;
    return finish("POST " + path, res ? res->status : 0, res ? res->body : "", !res, timed_out);
}

std::string http_get_bytes(const std::string& url, double timeout_seconds) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw PreconditionError("not an absolute URL: " + url);
    auto slash = url.find('/', scheme + 3);
    auto origin = url.substr(0, slash);
    auto path = slash == std::string::npos ? std::string("/") : url.substr(slash);
    httplib::Client cli(origin);
    configure(cli, timeout_seconds);
    auto res = cli.Get(path);
    if (!res) {
        if (res.error() == httplib::Error::Read) throw TimeoutError("GET " + url + ": request timed out");
        throw BackendUnreachable("GET " + url + ": cannot reach " + origin);
    }
    if (res->status == 429) throw RateLimited("GET " + url + ": rate limited");
    if (res->status < 200 || res->status >= 300) throw ProviderError("GET " + url + ": HTTP " + std::to_string(res->status));
    return res->body;
}

json HttpTransport::get_json(const std::string& path_and_query) {
    httplib::Client cli(origin_);
    configure(cli, config_.timeout_seconds);
    auto res = cli.Get(base_path_ + path_and_query, headers_for(credential_, true));
    bool timed_out = !res && res.error() == httplib::Error::Read;
    auto path = path_and_query.substr(0, path_and_query.find('?'));
    return finish("GET " + path, res ? res->status : 0, res ? res->body : "", !res, timed_out);
}

// ---------------------------------------------------------------------------

HttpCompletionBackend::HttpCompletionBackend(const ProviderConfig& config) : config_(config), http_(config) {
    if (config.requests_per_second > 0) limiter_ = std::make_unique<RateLimiter>(config.requests_per_second);
}

std::string HttpCompletionBackend::complete(const StructuredPrompt& prompt, const std::string& rendered) {
    if (limiter_) limiter_->acquire();
    json body{{"model", config_.model},
              {"temperature", 0},
              {"messages",
               json::array({{{"role", "system"},
                             {"content", "You are a careful research assistant. Task: " + to_string(prompt.role) +
                                             ". Reply with a single JSON value and nothing else."}},
                            {{"role", "user"}, {"content", rendered}}})}};
    if (config_.mock_seed) body["seed"] = *config_.mock_seed;
    auto reply = http_.post_json("/chat/completions", body);
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError("chat completion reply has no message content");
    }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(const ProviderConfig& config) : config_(config), http_(config) {}

std::vector<Embedding> HttpEmbeddingProvider::do_embed(const std::vector<std::string>& texts) {
    auto reply = http_.post_json("/embeddings", {{"model", config_.model}, {"input", texts}});
    std::vector<Embedding> out(texts.size());
    try {
        const auto& data = reply.at("data");
        if (data.size() != texts.size()) throw ProviderError("embedding reply has the wrong number of vectors");
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto idx = data[i].value("index", i);
            if (idx >= out.size()) throw ProviderError("embedding reply index out of range");
            out[idx].values = data[i].at("embedding").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed embedding reply: ") + e.what());
    }
    return out;
}

HttpRerankProvider::HttpRerankProvider(const ProviderConfig& config) : config_(config), http_(config) {}

std::vector<double> HttpRerankProvider::score(const std::string& query, const std::vector<std::string>& documents) {
    if (documents.empty()) return {};
    auto reply = http_.post_json("/rerank", {{"model", config_.model}, {"query", query}, {"documents", documents}});
    std::vector<double> scores(documents.size(), 0.0);
    std::vector<bool> seen(documents.size(), false);
    try {
        for (const auto& r : reply.at("results")) {
            auto idx = r.at("index").get<std::size_t>();
            if (idx >= scores.size()) throw ProviderError("rerank reply index out of range");
            scores[idx] = r.at("relevance_score").get<double>();
            seen[idx] = true;
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed rerank reply: ") + e.what());
    }
    for (bool s : seen) {
        if (!s) throw ProviderError("rerank reply does not score every document");
    }
    return scores;
}

// ---------------------------------------------------------------------------

std::optional<PaperRecord> paper_from_graph_json(const json& j) {
    if (!j.is_object() || !j.contains("paperId") || !j["paperId"].is_string()) return std::nullopt;
    if (!j.contains("title") || !j["title"].is_string() || trim(j["title"].get<std::string>()).empty())
        return std::nullopt;
    PaperRecord r;
    r.paper_id = j["paperId"].get<std::string>();
    r.title = j["title"].get<std::string>();
    if (j.contains("abstract") && j["abstract"].is_string()) r.abstract = j["abstract"].get<std::string>();
    if (j.contains("authors") && j["authors"].is_array()) {
        for (const auto& a : j["authors"]) {
            if (a.contains("name") && a["name"].is_string()) r.authors.push_back(a["name"].get<std::string>());
        }
    }
    if (j.contains("year") && j["year"].is_number_integer()) r.year = j["year"].get<int>();
    if (j.contains("url") && j["url"].is_string()) r.url = j["url"].get<std::string>();
    std::vector<std::string> types;
    if (j.contains("publicationTypes") && j["publicationTypes"].is_array()) {
        for (const auto& t : j["publicationTypes"]) {
            if (t.is_string()) types.push_back(t.get<std::string>());
        }
    }
    r.is_review = detect_review(types, r.title);
    return r;
}

SemanticScholarProvider::SemanticScholarProvider(const ProviderConfig& config, TextExtractor* extractor,
                                                 Diagnostics* diagnostics)
    : config_(config),
      http_(config),
      limiter_(config.requests_per_second > 0 ? config.requests_per_second : 1.0),
      extractor_(extractor),
      diagnostics_(diagnostics) {
    if (extractor_ && !diagnostics_) throw PreconditionError("full-text extraction needs a diagnostics sink");
}

void SemanticScholarProvider::attach_full_text(PaperRecord& record, const json& item) {
    if (!item.contains("openAccessPdf") || !item["openAccessPdf"].is_object()) return;
    const auto& pdf = item["openAccessPdf"];
    if (!pdf.contains("url") || !pdf["url"].is_string() || pdf["url"].get<std::string>().empty()) return;
    std::string bytes;
    try {
        bytes = http_get_bytes(pdf["url"].get<std::string>(), config_.timeout_seconds);
    } catch (const std::exception& e) {
        diagnostics_->warn("extract", record.paper_id + ": " + e.what());
        return;
    }
    if (bytes.empty()) {
        diagnostics_->warn("extract", record.paper_id + ": empty document");
        return;
    }
    auto text = extractor_->extract_text(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), *diagnostics_);
    if (!trim(text).empty()) record.full_text = std::move(text);
}

json SemanticScholarProvider::get(const std::string& path_and_query) {
    for (int attempt = 0;; ++attempt) {
        limiter_.acquire();
        try {
            return http_.get_json(path_and_query);
        } catch (const RateLimited&) {
            if (attempt >= config_.max_retries) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << attempt));
        }
    }
}

std::vector<PaperRecord> SemanticScholarProvider::do_search(const std::string& query, std::size_t limit) {
    return search(query, limit, extractor_ != nullptr);
}

std::vector<PaperRecord> SemanticScholarProvider::search(const std::string& query, std::size_t limit, bool with_text) {
    auto reply = get("/paper/search?query=" + url_encode(query) + "&limit=" + std::to_string(std::min<std::size_t>(limit, 100)) +
                     "&fields=" + kPaperFields + (with_text ? ",openAccessPdf" : ""));
    std::vector<PaperRecord> out;
    if (!reply.contains("data") || !reply["data"].is_array()) return out;
    for (const auto& p : reply["data"]) {
        auto r = paper_from_graph_json(p);
        if (!r) continue;
        if (with_text) attach_full_text(*r, p);
        out.push_back(std::move(*r));
    }
    return out;
}

std::vector<PaperRecord> SemanticScholarProvider::do_linked(const std::string& paper_id, LinkDirection direction,
                                                            std::size_t limit) {
    bool refs = direction == LinkDirection::References;
    auto reply = get("/paper/" + url_encode(paper_id) + (refs ? "/references" : "/citations") +
                     "?limit=" + std::to_string(std::min<std::size_t>(limit, 1000)) + "&fields=" + kPaperFields);
    std::vector<PaperRecord> out;
    if (!reply.contains("data") || !reply["data"].is_array()) return out;
    const char* field = refs ? "citedPaper" : "citingPaper";
    for (const auto& item : reply["data"]) {
        if (!item.contains(field)) continue;
        if (auto r = paper_from_graph_json(item[field])) out.push_back(std::move(*r));
    }
    return out;
}

std::vector<PaperRecord> SemanticScholarProvider::do_resolve_candidates(const std::string& free_text) {
    return search(free_text, 10, false);
}

// ---------------------------------------------------------------------------
// PDF text
// ---------------------------------------------------------------------------

namespace {

std::string inflate_bytes(std::string_view in) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw Error("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::string out;
    char buf[16384];
    int rc;
    do {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw Error("FlateDecode stream is corrupt");
        }
        out.append(buf, sizeof(buf) - zs.avail_out);
    } while (rc != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
    inflateEnd(&zs);
    return out;
}

std::string ascii85_decode(std::string_view in) {
    std::string out;
    std::uint32_t tuple = 0;
    int n = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        char c = in[i];
        if (c == '~') break;
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == 'z' && n == 0) {
            out.append(4, '\0');
            continue;
        }
        if (c < '!' || c > 'u') throw Error("invalid ASCII85 data");
        tuple = tuple * 85 + static_cast<std::uint32_t>(c - '!');
        if (++n == 5) {
            for (int k = 3; k >= 0; --k) out += static_cast<char>((tuple >> (8 * k)) & 0xff);
            tuple = 0;
            n = 0;
        }
    }
    if (n > 0) {
        for (int k = n; k < 5; ++k) tuple = tuple * 85 + 84;
        for (int k = 0; k < n - 1; ++k) out += static_cast<char>((tuple >> (8 * (3 - k))) & 0xff);
    }
    return out;
}

std::string hex_decode(std::string_view in) {
    std::string digits;
    for (char c : in) {
        if (c == '>') break;
        if (std::isxdigit(static_cast<unsigned char>(c))) digits += c;
    }
    if (digits.size() % 2) digits += '0';
    std::string out;
    for (std::size_t i = 0; i < digits.size(); i += 2)
        out += static_cast<char>(std::stoi(digits.substr(i, 2), nullptr, 16));
    return out;
}

/// Applies the stream's filter chain; nullopt for filters we cannot decode.
std::optional<std::string> decode_stream(std::string_view dict, std::string_view raw) {
    std::string data(raw);
    auto f = dict.find("/Filter");
    if (f == std::string_view::npos) return data;
    auto rest = dict.substr(f + 7);
    auto first = rest.find_first_not_of(" \r\n");
    if (first == std::string_view::npos) return data;
    std::string_view spec;
    if (rest[first] == '[') {
        spec = rest.substr(first + 1, rest.find(']', first) - first - 1);
    } else {
        spec = rest.substr(first, rest.find_first_of(" /\r\n>", first + 1) - first);
    }
    std::size_t pos = 0;
    while ((pos = spec.find('/', pos)) != std::string_view::npos) {
        auto e = spec.find_first_of(" /\r\n", pos + 1);
        auto name = spec.substr(pos + 1, (e == std::string_view::npos ? spec.size() : e) - pos - 1);
        pos += 1;
        if (name == "FlateDecode" || name == "Fl") {
            data = inflate_bytes(data);
        } else if (name == "ASCII85Decode" || name == "A85") {
            data = ascii85_decode(data);
        } else if (name == "ASCIIHexDecode" || name == "AHx") {
            data = hex_decode(data);
        } else {
            return std::nullopt;
        }
    }
    return data;
}

struct Operand {
    enum Kind { Number, String, Array, Other } kind = Other;
    double number = 0;
    std::string text;
    std::vector<Operand> items;
};

class ContentParser {
public:
    explicit ContentParser(std::string_view s) : s_(s) {}

    std::string run() {
        std::vector<Operand> stack;
        while (skip_space(), pos_ < s_.size()) {
            char c = s_[pos_];
            if (c == '(') {
                stack.push_back({Operand::String, 0, literal(), {}});
            } else if (c == '<' && peek(1) == '<') {
                pos_ += 2;
                stack.clear();
            } else if (c == '>' && peek(1) == '>') {
                pos_ += 2;
            } else if (c == '<') {
                stack.push_back({Operand::String, 0, hex(), {}});
            } else if (c == '[') {
                ++pos_;
                stack.push_back(array());
            } else if (c == '/' ) {
                ++pos_;
                word();
                stack.push_back({});
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
                stack.push_back({Operand::Number, std::strtod(word().c_str(), nullptr), {}, {}});
            } else {
                auto op = word();
                if (op.empty()) {
                    ++pos_;
                    continue;
                }
                apply(op, stack);
                stack.clear();
            }
        }
        return out_;
    }

private:
    char peek(std::size_t k) const { return pos_ + k < s_.size() ? s_[pos_ + k] : '\0'; }

    void skip_space() {
        while (pos_ < s_.size()) {
            char c = s_[pos_];
            if (c == '%') {
                while (pos_ < s_.size() && s_[pos_] != '\n' && s_[pos_] != '\r') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c)) || c == '\0') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string word() {
        auto start = pos_;
        while (pos_ < s_.size()) {
            char c = s_[pos_];
            if (std::isspace(static_cast<unsigned char>(c)) || std::string_view("()<>[]{}/%").find(c) != std::string_view::npos)
                break;
            ++pos_;
        }
        return std::string(s_.substr(start, pos_ - start));
    }

    std::string literal() {
        ++pos_;
        std::string out;
        int depth = 1;
        while (pos_ < s_.size()) {
            char c = s_[pos_++];
            if (c == '\\' && pos_ < s_.size()) {
                char e = s_[pos_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 'r': out += '\r'; break;
                    case 't': out += '\t'; break;
                    case 'b': out += '\b'; break;
                    case 'f': out += '\f'; break;
                    case '\r':
                        if (pos_ < s_.size() && s_[pos_] == '\n') ++pos_;
                        break;
                    case '\n': break;
                    default:
                        if (e >= '0' && e <= '7') {
                            int v = e - '0';
                            for (int i = 0; i < 2 && pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '7'; ++i)
                                v = v * 8 + (s_[pos_++] - '0');
                            out += static_cast<char>(v);
                        } else {
                            out += e;
                        }
                }
            } else if (c == '(') {
                ++depth;
                out += c;
            } else if (c == ')') {
                if (--depth == 0) break;
                out += c;
            } else {
                out += c;
            }
        }
        return out;
    }

    std::string hex() {
        ++pos_;
        std::string digits;
        while (pos_ < s_.size() && s_[pos_] != '>') {
            if (std::isxdigit(static_cast<unsigned char>(s_[pos_]))) digits += s_[pos_];
            ++pos_;
        }
        ++pos_;
        if (digits.size() % 2) digits += '0';
        std::string out;
        for (std::size_t i = 0; i < digits.size(); i += 2)
            out += static_cast<char>(std::stoi(digits.substr(i, 2), nullptr, 16));
        return out;
    }

    Operand array() {
        Operand a{Operand::Array, 0, {}, {}};
        while (skip_space(), pos_ < s_.size() && s_[pos_] != ']') {
            char c = s_[pos_];
            if (c == '(') {
                a.items.push_back({Operand::String, 0, literal(), {}});
            } else if (c == '<') {
                a.items.push_back({Operand::String, 0, hex(), {}});
            } else {
                auto w = word();
                if (w.empty()) {
                    ++pos_;
                    continue;
                }
                a.items.push_back({Operand::Number, std::strtod(w.c_str(), nullptr), {}, {}});
            }
        }
        ++pos_;
        return a;
    }

    void newline() {
        while (!out_.empty() && out_.back() == ' ') out_.pop_back();
        if (!out_.empty() && out_.back() != '\n') out_ += '\n';
    }
    void space() {
        if (!out_.empty() && out_.back() != ' ' && out_.back() != '\n') out_ += ' ';
    }

    void apply(const std::string& op, const std::vector<Operand>& stack) {
        if (op == "BT") {
            in_text_ = true;
        } else if (op == "ET") {
            in_text_ = false;
            space();
        } else if (!in_text_) {
            return;
        } else if (op == "Tj" || op == "'" || op == "\"") {
            if (op != "Tj") newline();
            if (!stack.empty() && stack.back().kind == Operand::String) out_ += stack.back().text;
        } else if (op == "TJ") {
            if (stack.empty() || stack.back().kind != Operand::Array) return;
            for (const auto& item : stack.back().items) {
                if (item.kind == Operand::String) {
                    out_ += item.text;
                } else if (item.number < -200) {
                    space();
                }
            }
        } else if (op == "T*") {
            newline();
        } else if (op == "Td" || op == "TD") {
            if (stack.size() >= 2 && stack[stack.size() - 1].number != 0) {
                newline();
            } else {
                space();
            }
        } else if (op == "Tm") {
            space();
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    bool in_text_ = false;
    std::string out_;
};

}  // namespace

std::string PdfTextExtractor::do_extract(std::span<const std::uint8_t> bytes) {
    std::string_view doc(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    if (doc.substr(0, 5) != "%PDF-") throw Error("missing PDF header");
    std::string text;
    std::size_t pos = 0;
    bool any_stream = false;
    while (true) {
        auto at = doc.find("stream", pos);
        if (at == std::string_view::npos) break;
        if (at >= 3 && doc.substr(at - 3, 3) == "end") {
            pos = at + 6;
            continue;
        }
        auto dict_start = doc.rfind("obj", at);
        auto dict = doc.substr(dict_start == std::string_view::npos ? 0 : dict_start, at - (dict_start == std::string_view::npos ? 0 : dict_start));
        auto data = at + 6;
        if (data < doc.size() && doc[data] == '\r') ++data;
        if (data < doc.size() && doc[data] == '\n') ++data;
        auto end = doc.find("endstream", data);
        if (end == std::string_view::npos) throw Error("unterminated stream");
        pos = end + 9;
        any_stream = true;
        if (dict.find("/Image") != std::string_view::npos || dict.find("/XRef") != std::string_view::npos) continue;
        auto content = decode_stream(dict, doc.substr(data, end - data));
        if (!content) continue;
        if (content->find("BT") == std::string::npos) continue;
        auto page = ContentParser(*content).run();
        auto lines = split(page, '\n');
        std::string cleaned;
        for (auto& l : lines) {
            l = trim(l);
            if (l.empty()) continue;
            cleaned += l + "\n";
        }
        text += cleaned;
    }
    if (!any_stream) throw Error("no content streams");
    return text;
}

}  // namespace tracewrite
