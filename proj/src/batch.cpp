#include "screenr/batch.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <exception>
#include <optional>
#include <set>
#include <thread>

namespace screenr {

using nlohmann::json;

std::string serialize_record(const ScreeningResult& r)
{
    json j{
        {"schema_version", kCacheSchemaVersion},
        {"source_id", r.source_id},
        {"content_hash", r.content_hash},
        {"method", to_string(r.method)},
        {"model", r.model_name},
        {"template_version", r.template_version},
        {"verdict", r.verdict ? json(to_string(*r.verdict)) : json(nullptr)},
        {"failure", r.failure ? json{{"kind", to_string(r.failure->kind)}, {"message", r.failure->message}}
                              : json(nullptr)},
        {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}},
        {"started_at", format_timestamp(r.started_at)},
        {"finished_at", format_timestamp(r.finished_at)},
        {"transcript", render_transcript(r.transcript)},
    };
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

ScreeningResult parse_record(std::string_view line)
{
    auto fail = [](const std::string& why) -> ScreeningResult { throw Error(ErrorKind::CacheCorrupt, why); };

    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return fail("line is not a JSON object");
    }
    try {
        if (j.at("schema_version").get<int>() != kCacheSchemaVersion) {
            return fail("unsupported schema_version " + j.at("schema_version").dump());
        }
        ScreeningResult r;
        r.source_id = j.at("source_id").get<std::string>();
        r.content_hash = j.at("content_hash").get<std::string>();
        auto method = method_from_string(j.at("method").get<std::string>());
        if (!method) {
            return fail("unknown method");
        }
        r.method = *method;
        r.model_name = j.at("model").get<std::string>();
        r.template_version = j.at("template_version").get<std::string>();
        if (const auto& v = j.at("verdict"); !v.is_null()) {
            auto verdict = verdict_from_string(v.get<std::string>());
            if (!verdict) {
                return fail("unknown verdict");
            }
            r.verdict = verdict;
        }
        if (const auto& f = j.at("failure"); !f.is_null()) {
            r.failure = ScreeningFailure{error_kind_from_string(f.at("kind").get<std::string>()),
                                         f.at("message").get<std::string>()};
        }
        if (r.verdict.has_value() == r.failure.has_value()) {
            return fail("record must carry exactly one of verdict and failure");
        }
        r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::uint64_t>();
        r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::uint64_t>();
        auto started = parse_timestamp(j.at("started_at").get<std::string>());
        auto finished = parse_timestamp(j.at("finished_at").get<std::string>());
        if (!started || !finished) {
            return fail("bad timestamp");
        }
        r.started_at = *started;
        r.finished_at = *finished;
        r.transcript = parse_transcript(j.at("transcript").get<std::string>());
        return r;
    } catch (const json::exception& e) {
        return fail(e.what());
    } catch (const std::invalid_argument& e) {
        return fail(e.what());
    } catch (const Error& e) {
        return fail(e.what());
    }
}

CacheContents load_cache(const std::filesystem::path& path, CachePolicy policy)
{
    CacheContents out;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (std::filesystem::exists(path)) {
            throw Error(ErrorKind::CacheCorrupt, "cache file " + path.string() + " exists but cannot be read");
        }
        return out;
    }
    std::string line;
    while (std::getline(in, line)) {
        ++out.lines;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        try {
            auto record = parse_record(line);
            CacheKey key{record.source_id, record.content_hash};
            auto it = out.records.find(key);
            if (it == out.records.end() || record.ok() || !it->second.ok()) {
                out.records.insert_or_assign(std::move(key), std::move(record));
            }
        } catch (const Error& e) {
            if (policy == CachePolicy::strict) {
                throw Error(ErrorKind::CacheCorrupt,
                            path.string() + " line " + std::to_string(out.lines) + ": " + e.what());
            }
            spdlog::warn("skipping corrupt cache line {} in {}: {}", out.lines, path.string(), e.what());
            out.warnings.push_back({out.lines, e.what()});
        }
    }
    return out;
}

CacheWriter::CacheWriter(const std::filesystem::path& path) : path_(path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    bool torn_tail = false;
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
        std::ifstream in(path, std::ios::binary);
        in.seekg(-1, std::ios::end);
        char last = 0;
        in.get(last);
        torn_tail = last != '\n';
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) {
        throw Error(ErrorKind::UnreadableFile, "cannot open cache file " + path.string() + " for appending");
    }
    if (torn_tail) {
        out_ << '\n';
        out_.flush();
    }
}

void CacheWriter::append(const ScreeningResult& result)
{
    auto line = serialize_record(result);
    line += '\n';
    std::lock_guard lock(mutex_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) {
        throw Error(ErrorKind::UnreadableFile, "failed writing cache file " + path_.string());
    }
}

namespace {

enum class Resolution { fresh, cached };

struct Slot {
    std::optional<ScreeningResult> result;
    Resolution how = Resolution::fresh;
};

ScreeningResult failed_result(const Source& source, Method method, const Backend& backend,
                              std::string_view review_text, const PromptTemplates& templates, const Error& e,
                              Timestamp started)
{
    ScreeningResult r;
    r.source_id = source.id;
    r.method = method;
    r.model_name = backend.model_name();
    r.template_version = templates.version;
    r.content_hash = content_hash(review_text, source, method, r.model_name, templates.version);
    r.failure = ScreeningFailure{e.kind(), e.what()};
    r.started_at = started;
    r.finished_at = now_ms();
    return r;
}

}  // namespace

BatchOutcome screen_sources(Backend& backend, std::string_view review_text, std::span<const Source> sources,
                            const BatchOptions& options)
{
    if (options.concurrency < 1) {
        throw Error(ErrorKind::Usage, "concurrency must be at least 1");
    }
    if (review_text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw Error(ErrorKind::IncompleteDescription, "review description is empty");
    }
    std::set<std::string_view> ids;
    for (const auto& s : sources) {
        if (!ids.insert(s.id).second) {
            throw Error(ErrorKind::DuplicateSource, "source id " + s.id + " appears more than once");
        }
    }
    const auto& templates = options.templates ? *options.templates : PromptTemplates::builtin();

    auto cache = load_cache(options.cache_path, options.cache_policy);
    CacheWriter writer(options.cache_path);

    std::vector<Slot> slots(sources.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex error_mutex;
    std::exception_ptr fatal;

    auto stop_with = [&](std::exception_ptr e) {
        std::lock_guard lock(error_mutex);
        if (!fatal) {
            fatal = std::move(e);
        }
        abort = true;
    };

    auto worker = [&] {
        while (!abort) {
            const auto i = next.fetch_add(1);
            if (i >= sources.size()) {
                return;
            }
            const auto& source = sources[i];
            const auto hash = content_hash(review_text, source, options.method, backend.model_name(), templates.version);
            if (auto it = cache.records.find({source.id, hash}); it != cache.records.end()) {
                if (it->second.ok() || !options.retry_failures) {
                    slots[i] = {it->second, Resolution::cached};
                    if (options.on_result) {
                        options.on_result(i, it->second, true);
                    }
                    continue;
                }
            }

            const auto started = now_ms();
            std::optional<ScreeningResult> result;
            try {
                result = screen_source(backend, options.method, review_text, source, templates);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::AuthError || !is_backend_error(e.kind())) {
                    stop_with(std::current_exception());
                    return;
                }
                spdlog::warn("screening {} failed: {}", source.id, e.what());
                result = failed_result(source, options.method, backend, review_text, templates, e, started);
            } catch (...) {
                stop_with(std::current_exception());
                return;
            }
            try {
                writer.append(*result);
            } catch (...) {
                stop_with(std::current_exception());
                return;
            }
            if (options.on_result) {
                options.on_result(i, *result, false);
            }
            slots[i] = {std::move(result), Resolution::fresh};
        }
    };

    const auto workers = std::min(options.concurrency, std::max<std::size_t>(sources.size(), 1));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    if (fatal) {
        std::rethrow_exception(fatal);
    }

    BatchOutcome outcome;
    outcome.report.total = sources.size();
    outcome.report.cache_warnings = std::move(cache.warnings);
    outcome.results.reserve(sources.size());
    for (auto& slot : slots) {
        auto& r = *slot.result;
        if (!r.ok()) {
            outcome.report.failures.push_back({r.source_id, r.failure->kind, r.failure->message});
        } else if (slot.how == Resolution::cached) {
            ++outcome.report.served_from_cache;
        } else {
            ++outcome.report.newly_screened;
        }
        outcome.results.push_back(std::move(r));
    }
    return outcome;
}

}  // namespace screenr
