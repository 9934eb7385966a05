#pragma once

#include <cstdint>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tracewrite {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition at an API boundary.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Input document or file could not be parsed. `location` is human readable
/// ("line 3", "byte 120").
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::string location)
        : Error(message + " (at " + location + ")"), location_(std::move(location)) {}
    const std::string& location() const { return location_; }

private:
    std::string location_;
};

/// Base for every failure that originates in an external backend.
class ProviderError : public Error {
public:
    using Error::Error;
    virtual bool retryable() const { return false; }
};

class BackendUnreachable : public ProviderError {
public:
    using ProviderError::ProviderError;
    bool retryable() const override { return true; }
};

class RateLimited : public ProviderError {
public:
    using ProviderError::ProviderError;
    bool retryable() const override { return true; }
};

class TimeoutError : public ProviderError {
public:
    using ProviderError::ProviderError;
    bool retryable() const override { return true; }
};

class UnknownPaperId : public ProviderError {
public:
    using ProviderError::ProviderError;
};

/// Structured output still invalid after all retries. Carries the last raw reply.
class SchemaViolation : public ProviderError {
public:
    SchemaViolation(const std::string& message, std::string raw_text)
        : ProviderError(message), raw_text_(std::move(raw_text)) {}
    const std::string& raw_text() const { return raw_text_; }

private:
    std::string raw_text_;
};

/// A pipeline stage failed; `stage` names it (e.g. "retrieval/search").
/// `provider_failure` is set when the root cause was a backend error.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message, bool provider_failure = false)
        : Error(stage + ": " + message), stage_(std::move(stage)), provider_failure_(provider_failure) {}
    const std::string& stage() const { return stage_; }
    bool provider_failure() const { return provider_failure_; }

private:
    std::string stage_;
    bool provider_failure_;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct Warning {
    std::string component;
    std::string message;
};

/// Thread-safe sink for non-fatal warnings. Pipeline code degrades instead of
/// throwing in many places; this is where those degradations become visible.
class Diagnostics {
public:
    void warn(std::string component, std::string message);
    std::vector<Warning> warnings() const;
    std::size_t count() const;
    std::size_t count(std::string_view component) const;
    void clear();
    void set_echo(bool echo) { echo_ = echo; }

private:
    mutable std::mutex mutex_;
    std::vector<Warning> warnings_;
    bool echo_ = false;
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Lowercase alphanumeric tokens (hyphens split tokens).
std::vector<std::string> tokenize(std::string_view s);
/// tokenize() minus English stopwords, with a trailing plural "s" stripped.
std::vector<std::string> content_tokens(std::string_view s);
std::set<std::string> content_token_set(std::string_view s);
bool is_stopword(std::string_view token);

/// Lowercase, punctuation collapsed to single spaces, trimmed.
std::string normalize_title(std::string_view s);

/// Split into sentences on ., ! or ? followed by whitespace.
std::vector<std::string> split_sentences(std::string_view text);

/// Number of Unicode scalar values; invalid bytes count as one each.
std::size_t utf8_length(std::string_view s);
/// Byte offset of the first invalid UTF-8 sequence, or npos when valid.
std::size_t utf8_invalid_offset(std::string_view s);

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::string_view data);

}  // namespace tracewrite
