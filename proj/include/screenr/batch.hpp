#pragma once

#include "screenr/backend.hpp"
#include "screenr/engine.hpp"
#include "screenr/review.hpp"

#include <compare>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace screenr {

inline constexpr int kCacheSchemaVersion = 1;

struct CacheKey {
    std::string source_id;
    std::string content_hash;

    auto operator<=>(const CacheKey&) const = default;
};

enum class CachePolicy {
    skip_corrupt,  // warn and continue past unparseable lines
    strict,        // throw Error(CacheCorrupt)
};

struct CacheWarning {
    std::size_t line;  // 1-based
    std::string message;
};

/**
 * Live view of a cache file. Per key, the last successful record wins;
 * a key with only failed records maps to its last failure, which callers
 * can detect through ScreeningResult::ok() and re-attempt.
 */
struct CacheContents {
    std::map<CacheKey, ScreeningResult> records;
    std::vector<CacheWarning> warnings;
    std::size_t lines = 0;
};

/// One self-contained JSON line, without the trailing newline.
[[nodiscard]] std::string serialize_record(const ScreeningResult& result);

/// Throws Error(CacheCorrupt).
[[nodiscard]] ScreeningResult parse_record(std::string_view line);

/// A missing file is an empty cache.
[[nodiscard]] CacheContents load_cache(const std::filesystem::path& path,
                                       CachePolicy policy = CachePolicy::skip_corrupt);

/**
 * Serialized appender. Each record is written as one complete line and
 * flushed before append() returns; a torn final line left by an earlier
 * crash is terminated first so it stays isolated.
 */
class CacheWriter {
public:
    explicit CacheWriter(const std::filesystem::path& path);

    void append(const ScreeningResult& result);

private:
    std::mutex mutex_;
    std::ofstream out_;
    std::filesystem::path path_;
};

struct BatchOptions {
    Method method = Method::cot;
    std::filesystem::path cache_path;
    std::size_t concurrency = 1;
    CachePolicy cache_policy = CachePolicy::skip_corrupt;
    /// Re-screen sources whose cached record is a failure.
    bool retry_failures = true;
    const PromptTemplates* templates = nullptr;
    /// Called from worker threads as each source resolves.
    std::function<void(std::size_t index, const ScreeningResult& result, bool from_cache)> on_result;
};

struct BatchFailure {
    std::string source_id;
    ErrorKind kind;
    std::string message;
};

struct BatchReport {
    std::size_t total = 0;
    std::size_t newly_screened = 0;
    std::size_t served_from_cache = 0;
    std::vector<BatchFailure> failures;
    std::vector<CacheWarning> cache_warnings;
};

struct BatchOutcome {
    std::vector<ScreeningResult> results;  // input order
    BatchReport report;
};

/**
 * Screens every source, reusing live cache records keyed by
 * (source_id, content_hash) and appending each new result to the cache as
 * soon as it completes. Per-source backend failures are recorded and the
 * batch continues; an AuthError stops the batch and is rethrown once
 * in-flight work finishes.
 */
[[nodiscard]] BatchOutcome screen_sources(Backend& backend, std::string_view review_text,
                                          std::span<const Source> sources, const BatchOptions& options);

}  // namespace screenr
