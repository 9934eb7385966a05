#include "tracewrite/providers.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

namespace tracewrite {

// ---------------------------------------------------------------------------
// ProviderConfig
// ---------------------------------------------------------------------------

void ProviderConfig::validate() const {
    if (!(timeout_seconds > 0.0)) throw ConfigError("provider timeout must be positive");
    if (max_retries < 0) throw ConfigError("provider max_retries must be non-negative");
    if (requests_per_second < 0.0) throw ConfigError("requests_per_second must be non-negative");
}

json ProviderConfig::to_json() const {
    json j{{"endpoint", endpoint},
           {"credential_env", credential_env},
           {"model", model},
           {"timeout_seconds", timeout_seconds},
           {"max_retries", max_retries},
           {"requests_per_second", requests_per_second},
           {"backoff_ms", backoff_ms}};
    j["mock_seed"] = mock_seed ? json(*mock_seed) : json(nullptr);
    return j;
}

ProviderConfig ProviderConfig::from_json(const json& j) {
    ProviderConfig c;
    c.endpoint = j.value("endpoint", c.endpoint);
    c.credential_env = j.value("credential_env", c.credential_env);
    c.model = j.value("model", c.model);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    if (j.contains("mock_seed") && !j["mock_seed"].is_null()) c.mock_seed = j["mock_seed"].get<std::uint64_t>();
    c.validate();
    return c;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.dimension() != b.dimension()) throw PreconditionError("embedding dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Prompt roles and templates
// ---------------------------------------------------------------------------

namespace {

struct RoleInfo {
    PromptRole role;
    const char* name;
    std::vector<std::string> slots;
    const char* instruction;
    const char* reply_shape;
};

const std::vector<RoleInfo>& role_table() {
    static const std::vector<RoleInfo> kRoles = {
        {PromptRole::KeywordGen, "keyword_gen", {"topic", "description"},
         "You are preparing a literature search for a survey. Propose between 3 and 10 concise search "
         "keywords or key phrases that together cover the topic below.",
         R"({"keywords": ["..."]})"},
        {PromptRole::RelevanceScore, "relevance_score", {"topic", "description", "papers"},
         "Rate how relevant each paper is to the survey topic on a 0-100 scale. Judge from the title "
         "and abstract only. Return one score per paper id.",
         R"({"scores": [{"id": "...", "score": 0}]})"},
        {PromptRole::ReviewOutlineExtract, "review_outline_extract", {"title", "text"},
         "Extract the section structure of the review article below as an ordered list of section "
         "headings.",
         R"({"outline": ["..."]})"},
        {PromptRole::OutlineGen, "outline_gen", {"topic", "description", "context"},
         "Draft a two-level survey outline for the topic. Use the review structures and paper "
         "abstracts in the context as inspiration. Every subsection needs a one or two sentence "
         "description of what it will cover.",
         R"({"sections": [{"section_title": "...", "section_description": "...", "subsections": [{"subsection_title": "...", "subsection_description": "..."}]}]})"},
        {PromptRole::OutlineRefine, "outline_refine", {"topic", "outline"},
         "Refine the outline below for coherence. Merge or drop redundant subsections, keep titles "
         "unique, and keep a description on every subsection.",
         R"({"sections": [{"section_title": "...", "section_description": "...", "subsections": [{"subsection_title": "...", "subsection_description": "..."}]}]})"},
        {PromptRole::RawPlan, "raw_plan", {"outline"},
         "For each subsection decide whether additional literature retrieval is needed and whether a "
         "comparison table should be generated.",
         R"({"entries": [{"subsection_title": "...", "trigger_additional_search": true, "generate_table": false}]})"},
        {PromptRole::DepGraph, "dep_graph", {"outline"},
         "For each subsection list the other subsections that must be written first because the "
         "subsection builds on their content. Use exact subsection titles.",
         R"({"dependencies": [{"subsection_title": "...", "depends_on": ["..."]}]})"},
        {PromptRole::Skeleton, "skeleton", {"title", "description", "memory", "context"},
         "Produce a writing skeleton of 3 to 10 key points for the subsection. Stay consistent with "
         "the terminology already used in the written subsections listed in memory.",
         R"({"points": ["..."], "terminology": ["..."]})"},
        {PromptRole::SubsectionWrite, "subsection_write",
         {"title", "description", "skeleton", "context", "candidate_index", "word_budget"},
         "Write the subsection following the skeleton. Ground every claim in the context passages "
         "and cite with \\cite{bibkey} using only bibkeys that appear in the context. Traced entries "
         "are original sources of ideas mentioned in the passages; prefer citing them for those "
         "ideas.",
         R"({"text": "..."})"},
        {PromptRole::DraftSelect, "draft_select", {"title", "skeleton", "drafts"},
         "Choose the best draft by alignment with the skeleton, contextual relevance and writing "
         "quality. Explain the choice.",
         R"({"best_index": 0, "justification": "..."})"},
        {PromptRole::Traceworthiness, "traceworthiness", {"title", "description", "passage", "markers"},
         "For each citation marker in the passage decide whether it refers to the original source of "
         "a key concept or result relevant to the subsection. Give a short explanation.",
         R"({"assessments": [{"marker": "...", "traceworthy": false, "explanation": "..."}]})"},
        {PromptRole::TerminologyExtract, "terminology_extract", {"title", "text"},
         "Extract between 3 and 15 key domain-specific terms from the text with a short definition "
         "of each as used there.",
         R"({"terms": [{"term": "...", "definition": "..."}]})"},
        {PromptRole::Revision, "revision", {"outline", "memory"},
         "Review the unwritten subsections of the outline given what has been written. Propose "
         "structural revisions (merge, delete, rename, reorder, add) that remove redundancy, fill "
         "conceptual gaps or fix ordering. Only unwritten subsections may be targeted. An empty "
         "list is fine.",
         R"({"actions": [{"kind": "rename", "targets": ["<subsection id>"], "title": "...", "description": "...", "position": 0}]})"},
        {PromptRole::Refinement, "refinement", {"pass", "title", "text", "skeleton", "context"},
         "Revise the subsection text for the named pass. structure: reorder to follow the skeleton. "
         "citation: make every factual claim carry a citation from the context and list those claim "
         "sentences. polish: improve fluency and clarity. global: fix the issue described in the "
         "skeleton slot. Keep existing \\cite markers.",
         R"({"text": "...", "claim_sentences": ["..."]})"},
        {PromptRole::GlobalDiagnosis, "global_diagnosis", {"document"},
         "Read the full survey draft and list subsections containing logical contradictions, "
         "redundancy, or terminology and style inconsistencies.",
         R"({"flagged": [{"subsection_id": "...", "issue": "..."}]})"},
        {PromptRole::TableCoreAspect, "table_core_aspect", {"title", "description", "papers"},
         "Name the single comparative theme (for example training paradigm, objective or "
         "architecture type) that best organizes these papers.",
         R"({"aspect": "..."})"},
        {PromptRole::TableCategories, "table_categories", {"title", "aspect", "subsection_text", "papers"},
         "Propose 4 to 6 concise method categories along the given aspect.",
         R"({"categories": ["..."]})"},
        {PromptRole::TableClassify, "table_classify", {"categories", "paper", "evidence"},
         "Assign the paper to one or more of the categories using the evidence. Use \"Others\" when "
         "none fits.",
         R"({"categories": ["..."]})"},
        {PromptRole::TableAspects, "table_aspects", {"title", "description", "subsection_text", "papers"},
         "Select 3 to 5 aspects along which these papers should be compared.",
         R"({"aspects": ["..."]})"},
        {PromptRole::TableCellSummary, "table_cell_summary", {"aspect", "paper", "evidence"},
         "Summarize what the evidence says about the paper for the given aspect in a few words. Reply "
         "\"not reported\" when the evidence does not say.",
         R"({"value": "..."})"},
        {PromptRole::Judge, "judge", {"document"},
         "Score the survey from 1 to 5 on coverage, relevance, structure, synthesis and consistency. "
         "Explain each score before giving it.",
         R"({"scores": {"coverage": 0, "relevance": 0, "structure": 0, "synthesis": 0, "consistency": 0}, "explanation": "..."})"},
    };
    return kRoles;
}

const RoleInfo& role_info(PromptRole role) {
    for (const auto& r : role_table()) {
        if (r.role == role) return r;
    }
    throw PreconditionError("unknown prompt role");
}

}  // namespace

std::string to_string(PromptRole role) {
    return role_info(role).name;
}

PromptRole prompt_role_from_string(std::string_view name) {
    for (const auto& r : role_table()) {
        if (name == r.name) return r.role;
    }
    throw PreconditionError("unknown prompt role: " + std::string(name));
}

std::vector<PromptRole> all_prompt_roles() {
    std::vector<PromptRole> out;
    for (const auto& r : role_table()) out.push_back(r.role);
    return out;
}

const std::vector<std::string>& declared_slots(PromptRole role) {
    return role_info(role).slots;
}

std::string render_prompt(const StructuredPrompt& prompt) {
    const auto& info = role_info(prompt.role);
    std::ostringstream out;
    out << info.instruction << "\n\n";
    for (const auto& slot : info.slots) {
        auto it = prompt.slots.find(slot);
        if (it == prompt.slots.end()) {
            throw PreconditionError("prompt " + std::string(info.name) + " is missing slot '" + slot + "'");
        }
        out << "## " << slot << "\n" << it->second << "\n\n";
    }
    for (const auto& [name, value] : prompt.slots) {
        if (std::find(info.slots.begin(), info.slots.end(), name) == info.slots.end()) {
            out << "## " << name << "\n" << value << "\n\n";
        }
    }
    out << "Reply with JSON only, shaped like:\n" << info.reply_shape << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Schemas
// ---------------------------------------------------------------------------

namespace {

// A small JSON-schema subset: type, properties, required, items, enum,
// minimum/maximum.
std::optional<std::string> check(const json& schema, const json& value, const std::string& path) {
    const std::string type = schema.value("type", "");
    auto fail = [&](const std::string& what) { return std::optional<std::string>(path + ": " + what); };
    if (type == "object") {
        if (!value.is_object()) return fail("expected object");
        for (const auto& req : schema.value("required", json::array())) {
            if (!value.contains(req.get<std::string>())) return fail("missing '" + req.get<std::string>() + "'");
        }
        if (schema.contains("properties")) {
            for (const auto& [key, sub] : schema["properties"].items()) {
                if (value.contains(key)) {
                    if (auto err = check(sub, value[key], path + "." + key)) return err;
                }
            }
        }
    } else if (type == "array") {
        if (!value.is_array()) return fail("expected array");
        if (schema.contains("items")) {
            for (std::size_t i = 0; i < value.size(); ++i) {
                if (auto err = check(schema["items"], value[i], path + "[" + std::to_string(i) + "]")) return err;
            }
        }
    } else if (type == "string") {
        if (!value.is_string()) return fail("expected string");
        if (schema.contains("enum")) {
            bool ok = false;
            for (const auto& e : schema["enum"]) ok = ok || e == value;
            if (!ok) return fail("value '" + value.get<std::string>() + "' not allowed");
        }
    } else if (type == "boolean") {
        if (!value.is_boolean()) return fail("expected boolean");
    } else if (type == "integer") {
        if (!value.is_number_integer()) return fail("expected integer");
    } else if (type == "number") {
        if (!value.is_number()) return fail("expected number");
    }
    return std::nullopt;
}

json obj(json props, json required) {
    return json{{"type", "object"}, {"properties", std::move(props)}, {"required", std::move(required)}};
}
json arr(json items) {
    return json{{"type", "array"}, {"items", std::move(items)}};
}
const json kStr = json{{"type", "string"}};
const json kBool = json{{"type", "boolean"}};
const json kNum = json{{"type", "number"}};
const json kInt = json{{"type", "integer"}};

json outline_schema() {
    auto sub = obj({{"subsection_title", kStr}, {"subsection_description", kStr}}, {"subsection_title"});
    auto sec = obj({{"section_title", kStr}, {"section_description", kStr}, {"subsections", arr(sub)}},
                   {"section_title", "subsections"});
    return obj({{"sections", arr(sec)}}, {"sections"});
}

}  // namespace

SchemaRegistry SchemaRegistry::defaults() {
    SchemaRegistry reg;
    auto add_schema = [&](PromptRole role, json schema) {
        reg.add(to_string(role), [schema = std::move(schema)](const json& v) { return check(schema, v, "$"); });
    };
    add_schema(PromptRole::KeywordGen, obj({{"keywords", arr(kStr)}}, {"keywords"}));
    add_schema(PromptRole::RelevanceScore,
               obj({{"scores", arr(obj({{"id", kStr}, {"score", kNum}}, {"id", "score"}))}}, {"scores"}));
    add_schema(PromptRole::ReviewOutlineExtract, obj({{"outline", arr(kStr)}}, {"outline"}));
    add_schema(PromptRole::OutlineGen, outline_schema());
    add_schema(PromptRole::OutlineRefine, outline_schema());
    add_schema(PromptRole::RawPlan,
               obj({{"entries", arr(obj({{"subsection_title", kStr},
                                         {"trigger_additional_search", kBool},
                                         {"generate_table", kBool}},
                                        {"subsection_title", "trigger_additional_search", "generate_table"}))}},
                   {"entries"}));
    add_schema(PromptRole::DepGraph,
               obj({{"dependencies",
                     arr(obj({{"subsection_title", kStr}, {"depends_on", arr(kStr)}}, {"subsection_title", "depends_on"}))}},
                   {"dependencies"}));
    add_schema(PromptRole::Skeleton, obj({{"points", arr(kStr)}, {"terminology", arr(kStr)}}, {"points"}));
    add_schema(PromptRole::SubsectionWrite, obj({{"text", kStr}}, {"text"}));
    add_schema(PromptRole::DraftSelect, obj({{"best_index", kInt}, {"justification", kStr}}, {"best_index", "justification"}));
    add_schema(PromptRole::Traceworthiness,
               obj({{"assessments", arr(obj({{"marker", kStr}, {"traceworthy", kBool}, {"explanation", kStr}},
                                            {"marker", "traceworthy"}))}},
                   {"assessments"}));
    add_schema(PromptRole::TerminologyExtract,
               obj({{"terms", arr(obj({{"term", kStr}, {"definition", kStr}}, {"term"}))}}, {"terms"}));
    json kind{{"type", "string"}, {"enum", {"merge", "delete", "rename", "reorder", "add"}}};
    add_schema(PromptRole::Revision,
               obj({{"actions", arr(obj({{"kind", kind},
                                         {"targets", arr(kStr)},
                                         {"title", kStr},
                                         {"description", kStr},
                                         {"section_title", kStr},
                                         {"position", kInt}},
                                        {"kind", "targets"}))}},
                   {"actions"}));
    add_schema(PromptRole::Refinement, obj({{"text", kStr}, {"claim_sentences", arr(kStr)}}, {"text"}));
    add_schema(PromptRole::GlobalDiagnosis,
               obj({{"flagged", arr(obj({{"subsection_id", kStr}, {"issue", kStr}}, {"subsection_id"}))}}, {"flagged"}));
    add_schema(PromptRole::TableCoreAspect, obj({{"aspect", kStr}}, {"aspect"}));
    add_schema(PromptRole::TableCategories, obj({{"categories", arr(kStr)}}, {"categories"}));
    add_schema(PromptRole::TableClassify, obj({{"categories", arr(kStr)}}, {"categories"}));
    add_schema(PromptRole::TableAspects, obj({{"aspects", arr(kStr)}}, {"aspects"}));
    add_schema(PromptRole::TableCellSummary, obj({{"value", kStr}}, {"value"}));
    add_schema(PromptRole::Judge,
               obj({{"scores", obj({{"coverage", kNum}, {"relevance", kNum}, {"structure", kNum},
                                    {"synthesis", kNum}, {"consistency", kNum}},
                                   {"coverage", "relevance", "structure", "synthesis", "consistency"})},
                    {"explanation", kStr}},
                   {"scores"}));
    return reg;
}

void SchemaRegistry::add(std::string tag, SchemaValidator validator) {
    validators_[std::move(tag)] = std::move(validator);
}

bool SchemaRegistry::contains(const std::string& tag) const {
    return validators_.count(tag) > 0;
}

std::optional<std::string> SchemaRegistry::validate(const std::string& tag, const json& value) const {
    auto it = validators_.find(tag);
    if (it == validators_.end()) throw PreconditionError("unregistered schema tag: " + tag);
    return it->second(value);
}

json parse_json_reply(const std::string& text) {
    auto first = text.find_first_of("{[");
    if (first == std::string::npos) return json::parse(text);  // throws with a useful message
    char open = text[first];
    char close = open == '{' ? '}' : ']';
    auto last = text.find_last_of(close);
    if (last == std::string::npos || last < first) return json::parse(text.substr(first));
    return json::parse(text.substr(first, last - first + 1));
}

// ---------------------------------------------------------------------------
// LlmClient
// ---------------------------------------------------------------------------

LlmClient::LlmClient(CompletionBackend& backend, ProviderConfig config, Diagnostics& diagnostics,
                     SchemaRegistry schemas)
    : backend_(backend), config_(std::move(config)), diagnostics_(diagnostics), schemas_(std::move(schemas)) {
    config_.validate();
}

StructuredReply LlmClient::complete_structured(const StructuredPrompt& prompt, const std::string& schema_tag) {
    if (!schemas_.contains(schema_tag)) throw PreconditionError("unregistered schema tag: " + schema_tag);
    const std::string base = render_prompt(prompt);  // checks slots before any dispatch
    {
        std::lock_guard lock(counts_mutex_);
        ++counts_[to_string(prompt.role)];
    }

    const int attempts = config_.max_retries + 1;
    std::string repair_note;
    std::string last_raw;
    std::string last_error;
    bool last_was_schema = false;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0 && !last_was_schema && config_.backoff_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << std::min(attempt - 1, 6)));
        }
        std::string raw;
        try {
            raw = backend_.complete(prompt, base + repair_note);
        } catch (const ProviderError& e) {
            if (!e.retryable()) throw;
            last_error = e.what();
            last_was_schema = false;
            if (attempt + 1 == attempts) throw;
            continue;
        }
        last_raw = raw;
        last_was_schema = true;
        json value;
        try {
            value = parse_json_reply(raw);
        } catch (const json::exception& e) {
            last_error = std::string("reply is not JSON: ") + e.what();
            repair_note = "\n\nYour previous reply could not be parsed (" + last_error +
                          "). Reply again with valid JSON only.";
            continue;
        }
        if (auto err = schemas_.validate(schema_tag, value)) {
            last_error = *err;
            repair_note = "\n\nYour previous reply did not match the required shape (" + *err +
                          "). Reply again with JSON matching the shape exactly.";
            continue;
        }
        if (attempt > 0) {
            diagnostics_.warn("llm", to_string(prompt.role) + " succeeded after " + std::to_string(attempt) + " retries");
        }
        return StructuredReply{std::move(value), attempt, std::move(raw)};
    }
    throw SchemaViolation(to_string(prompt.role) + " reply invalid after " + std::to_string(attempts) +
                              " attempts: " + last_error,
                          last_raw);
}

std::map<std::string, std::size_t> LlmClient::call_counts() const {
    std::lock_guard lock(counts_mutex_);
    return counts_;
}

std::size_t LlmClient::call_count(PromptRole role) const {
    std::lock_guard lock(counts_mutex_);
    auto it = counts_.find(to_string(role));
    return it == counts_.end() ? 0 : it->second;
}

void LlmClient::reset_call_counts() {
    std::lock_guard lock(counts_mutex_);
    counts_.clear();
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

std::vector<Embedding> EmbeddingProvider::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed: empty input");
    for (const auto& t : texts) {
        if (trim(t).empty()) throw PreconditionError("embed: blank text");
    }
    auto out = do_embed(texts);
    if (out.size() != texts.size()) throw ProviderError("embed: backend returned wrong number of vectors");
    for (const auto& e : out) {
        if (e.dimension() == 0 || e.dimension() != out.front().dimension()) {
            throw ProviderError("embed: inconsistent embedding dimensions");
        }
        for (double v : e.values) {
            if (!std::isfinite(v)) throw ProviderError("embed: non-finite value in embedding");
        }
    }
    return out;
}

std::size_t CachingEmbedder::cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

std::vector<Embedding> CachingEmbedder::do_embed(const std::vector<std::string>& texts) {
    std::vector<std::string> missing;
    {
        std::lock_guard lock(mutex_);
        std::set<std::string> seen;
        for (const auto& t : texts) {
            if (!cache_.count(t) && seen.insert(t).second) missing.push_back(t);
        }
    }
    if (!missing.empty()) {
        auto fresh = inner_.embed(missing);
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(fresh[i]));
    }
    std::lock_guard lock(mutex_);
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(cache_.at(t));
    return out;
}

// ---------------------------------------------------------------------------
// Scholarly
// ---------------------------------------------------------------------------

namespace {

std::vector<PaperRecord> dedupe_and_cap(std::vector<PaperRecord> in, std::size_t limit) {
    std::vector<PaperRecord> out;
    std::set<std::string> seen;
    for (auto& r : in) {
        if (out.size() >= limit) break;
        if (r.paper_id.empty() || trim(r.title).empty()) continue;
        if (!seen.insert(r.paper_id).second) continue;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

std::vector<PaperRecord> ScholarlyProvider::search_papers(const std::string& query, std::size_t limit) {
    if (trim(query).empty()) throw PreconditionError("search_papers: empty query");
    if (limit < 1) throw PreconditionError("search_papers: limit must be >= 1");
    return dedupe_and_cap(do_search(query, limit), limit);
}

std::vector<PaperRecord> ScholarlyProvider::get_linked_papers(const std::string& paper_id, LinkDirection direction,
                                                              std::size_t limit) {
    if (trim(paper_id).empty()) throw PreconditionError("get_linked_papers: empty paper id");
    if (limit < 1) throw PreconditionError("get_linked_papers: limit must be >= 1");
    return dedupe_and_cap(do_linked(paper_id, direction, limit), limit);
}

std::optional<PaperRecord> ScholarlyProvider::resolve_citation(const std::string& free_text) {
    if (trim(free_text).empty()) throw PreconditionError("resolve_citation: empty reference");
    return best_citation_match(free_text, do_resolve_candidates(free_text));
}

std::optional<AuthorYear> parse_author_year(std::string_view text) {
    static const std::regex kPattern(
        R"(((?:(?:van|von|der|de|di|da|le|la|du)\s+)*[A-Z][A-Za-z'\-]+)(?:\s+et\s+al\.?|\s+(?:&|and)\s+[A-Z][A-Za-z'\-]+)?,?\s*\(?((?:19|20)\d{2})[a-z]?\)?)");
    std::string s(text);
    std::smatch m;
    if (!std::regex_search(s, m, kPattern)) return std::nullopt;
    AuthorYear ay;
    auto surname = m[1].str();
    auto space = surname.find_last_of(' ');
    ay.surname = to_lower(space == std::string::npos ? surname : surname.substr(space + 1));
    ay.year = std::stoi(m[2].str());
    return ay;
}

std::optional<PaperRecord> best_citation_match(const std::string& free_text,
                                               const std::vector<PaperRecord>& candidates) {
    const auto norm = normalize_title(free_text);
    if (norm.empty()) return std::nullopt;

    for (const auto& c : candidates) {
        if (normalize_title(c.title) == norm) return c;
    }

    if (auto ay = parse_author_year(free_text)) {
        std::vector<const PaperRecord*> hits;
        for (const auto& c : candidates) {
            if (c.authors.empty() || !c.year || *c.year != ay->year) continue;
            if (to_lower(author_surname(c.authors.front())) == ay->surname) hits.push_back(&c);
        }
        if (hits.size() == 1) return *hits.front();
        return std::nullopt;  // ambiguous or unknown author-year: not confident
    }

    if (norm.size() >= 12) {
        std::vector<const PaperRecord*> hits;
        for (const auto& c : candidates) {
            if (normalize_title(c.title).find(norm) != std::string::npos) hits.push_back(&c);
        }
        if (hits.size() == 1) return *hits.front();
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Text extraction
// ---------------------------------------------------------------------------

std::string TextExtractor::extract_text(std::span<const std::uint8_t> bytes, Diagnostics& diagnostics) {
    if (bytes.empty()) throw PreconditionError("extract_text: empty document");
    std::string text;
    try {
        text = do_extract(bytes);
    } catch (const std::exception& e) {
        diagnostics.warn("extract", std::string("corrupt document: ") + e.what());
        return {};
    }
    if (text.empty()) diagnostics.warn("extract", "no text could be extracted");
    return text;
}

// ---------------------------------------------------------------------------
// RateLimiter
// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(double tokens_per_second, double burst)
    : rate_(tokens_per_second), burst_(std::max(1.0, burst)), tokens_(burst_), last_(std::chrono::steady_clock::now()) {
    if (!(tokens_per_second > 0.0)) throw PreconditionError("rate limiter needs a positive rate");
}

void RateLimiter::refill() {
    auto now = std::chrono::steady_clock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
}

bool RateLimiter::try_acquire() {
    std::lock_guard lock(mutex_);
    refill();
    if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return true;
    }
    return false;
}

void RateLimiter::acquire() {
    while (true) {
        double wait_seconds;
        {
            std::lock_guard lock(mutex_);
            refill();
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait_seconds = (1.0 - tokens_) / rate_;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_seconds));
    }
}

}  // namespace tracewrite
