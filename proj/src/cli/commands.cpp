#include "screenr/cli.hpp"

#include "manifest.hpp"
#include "screenr/backend.hpp"
#include "screenr/batch.hpp"
#include "screenr/csv.hpp"
#include "screenr/engine.hpp"
#include "screenr/error.hpp"
#include "screenr/metrics.hpp"
#include "screenr/review.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace screenr::cli {

namespace {

// Routes spdlog's default logger to the caller's error stream for one run.
class LogRedirect {
public:
    explicit LogRedirect(std::ostream& err) : previous_(spdlog::default_logger())
    {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
        auto logger = std::make_shared<spdlog::logger>("screenr", std::move(sink));
        logger->set_pattern("[%l] %v");
        logger->set_level(previous_->level());
        spdlog::set_default_logger(std::move(logger));
    }
    ~LogRedirect() { spdlog::set_default_logger(previous_); }

    LogRedirect(const LogRedirect&) = delete;
    LogRedirect& operator=(const LogRedirect&) = delete;

private:
    std::shared_ptr<spdlog::logger> previous_;
};

std::string trimmed(std::string s)
{
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

// ------------------------------------------------------------------ describe

struct DescribeArgs {
    ReviewDescription parts;
    std::string free_text_file;
    std::string output;
    bool interactive = false;
};

int cmd_describe(const DescribeArgs& a, Streams io)
{
    ReviewDescription parts = a.parts;
    if (!a.free_text_file.empty()) {
        parts.rendered_override = csv::read_file(a.free_text_file);
    } else if (a.interactive) {
        auto ask = [&](const char* label, std::string& field) {
            while (trimmed(field).empty()) {
                io.err << label << ": " << std::flush;
                if (!std::getline(io.in, field)) {
                    return;
                }
            }
        };
        if (trimmed(parts.title).empty()) {
            io.err << "Review title (optional, blank to skip): " << std::flush;
            std::getline(io.in, parts.title);
        }
        ask("Objective", parts.objective);
        ask("Population", parts.population);
        ask("Concept", parts.core_concept);
        ask("Context", parts.context);
    }
    try {
        write_text(a.output, build_review_description(parts));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::IncompleteDescription) {
            io.err << "error: " << e.what()
                   << "\nprovide --objective, --population, --concept and --context, "
                      "or --free-text FILE, or use --interactive\n";
            return kUsageError;
        }
        throw;
    }
    io.out << "wrote review description to " << a.output << "\n";
    return kSuccess;
}

// -------------------------------------------------------------------- screen

struct ScreenArgs {
    std::string input;
    std::string review;
    std::string method = "cot";
    std::string model = "gpt-4";
    std::optional<std::size_t> sample;
    std::uint64_t seed = 0;
    std::string cache;
    std::size_t concurrency = 1;
    std::string out;
    std::string backend = "live";
    bool strict_cache = false;
    bool retry_failures = true;
    ColumnMapping columns;
    std::string templates;
    std::string api_key_file;
    std::string base_url;
    double temperature = 0.0;
    int max_retries = 5;
    double timeout_s = 120.0;
    double rpm = 60.0;
};

std::unique_ptr<Backend> make_backend(const ScreenArgs& a, json& backend_info)
{
    constexpr std::string_view scripted_prefix = "scripted:";
    if (a.backend.rfind(scripted_prefix, 0) == 0) {
        auto path = a.backend.substr(scripted_prefix.size());
        backend_info = {{"kind", "scripted"}, {"script", path}, {"script_sha256", file_digest(path)}};
        return ScriptedBackend::from_file(path, a.model);
    }
    if (a.backend != "live") {
        throw Error(ErrorKind::Usage, "--backend must be 'live' or 'scripted:<file>'");
    }
    auto cfg = BackendConfig::from_environment();
    cfg.model_name = a.model;
    cfg.temperature = a.temperature;
    cfg.max_retries = a.max_retries;
    cfg.request_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(a.timeout_s * 1000.0));
    cfg.requests_per_minute = a.rpm;
    if (!a.base_url.empty()) {
        cfg.base_url = a.base_url;
    }
    if (!a.api_key_file.empty()) {
        cfg.api_key = ApiKey(trimmed(csv::read_file(a.api_key_file)));
    }
    cfg.validate();
    backend_info = {{"kind", "live"}, {"config", cfg}};
    return std::make_unique<LiveBackend>(std::move(cfg));
}

int cmd_screen(const ScreenArgs& a, const std::vector<std::string>& argv, Streams io)
{
    auto manifest = manifest_base("screen", argv);
    const auto method = method_from_string(a.method);
    if (!method) {
        throw Error(ErrorKind::Usage, "--method must be cot or zeroshot");
    }
    const fs::path out_dir = a.out;
    const fs::path cache_path = a.cache.empty() ? out_dir / "cache.jsonl" : fs::path(a.cache);

    // Everything below is validated before any request is sent.
    std::optional<PromptTemplates> custom_templates;
    if (!a.templates.empty()) {
        custom_templates = PromptTemplates::load(a.templates);
    }
    const auto& templates = custom_templates ? *custom_templates : PromptTemplates::builtin();
    const auto review_text = trimmed(csv::read_file(a.review));
    if (review_text.empty()) {
        throw Error(ErrorKind::IncompleteDescription, a.review + " is empty");
    }
    auto ingest = ingest_sources(a.input, a.columns);
    auto sources = ingest.sources;
    if (a.sample) {
        sources = sample_sources(ingest.sources, *a.sample, a.seed);
    }
    json backend_info;
    auto backend = make_backend(a, backend_info);

    for (const auto& d : ingest.report.dropped) {
        spdlog::info("dropped input row {} ({}): {}", d.row, d.id, to_string(d.reason));
    }
    spdlog::info("screening {} sources with method {} and model {}", sources.size(), a.method, a.model);

    BatchOptions opts;
    opts.method = *method;
    opts.cache_path = cache_path;
    opts.concurrency = a.concurrency;
    opts.cache_policy = a.strict_cache ? CachePolicy::strict : CachePolicy::skip_corrupt;
    opts.retry_failures = a.retry_failures;
    opts.templates = &templates;
    std::mutex progress_mutex;
    std::size_t done = 0;
    opts.on_result = [&](std::size_t, const ScreeningResult& r, bool cached) {
        std::lock_guard lock(progress_mutex);
        ++done;
        spdlog::info("[{}/{}] {}: {}{}", done, sources.size(), r.source_id,
                     r.ok() ? to_string(*r.verdict) : "error (" + std::string(to_string(r.failure->kind)) + ")",
                     cached ? " (cached)" : "");
    };
    auto outcome = screen_sources(*backend, review_text, sources, opts);

    csv::Row header{"id", "verdict", "method", "model", "content_hash", "failure"};
    std::string table = csv::format_row(header);
    const auto transcripts = out_dir / "transcripts";
    fs::create_directories(transcripts);
    for (const auto& r : outcome.results) {
        table += csv::format_row({r.source_id, r.ok() ? std::string(to_string(*r.verdict)) : "error",
                                  std::string(to_string(r.method)), r.model_name, r.content_hash,
                                  r.failure ? std::string(to_string(r.failure->kind)) : ""});
        write_text(transcripts / (safe_filename(r.source_id) + ".txt"), render_transcript(r.transcript));
    }
    write_text(out_dir / "verdicts.csv", table);

    const auto& rep = outcome.report;
    json failures = json::array();
    for (const auto& f : rep.failures) {
        failures.push_back({{"source_id", f.source_id}, {"kind", to_string(f.kind)}, {"message", f.message}});
    }
    json dropped = json::array();
    for (const auto& d : ingest.report.dropped) {
        dropped.push_back({{"row", d.row}, {"id", d.id}, {"reason", to_string(d.reason)}});
    }
    manifest["finished_at"] = format_timestamp(now_ms());
    manifest["method"] = a.method;
    manifest["model"] = a.model;
    manifest["template_version"] = templates.version;
    manifest["backend"] = backend_info;
    manifest["inputs"] = {
        {"sources", {{"path", a.input}, {"sha256", file_digest(a.input)}}},
        {"review", {{"path", a.review}, {"sha256", file_digest(a.review)}}},
        {"columns", {{"id", a.columns.id}, {"title", a.columns.title}, {"abstract", a.columns.abstract}}},
    };
    manifest["sample"] = a.sample ? json{{"n", *a.sample}, {"seed", a.seed}} : json(nullptr);
    manifest["cache"] = {{"path", cache_path.string()}, {"strict", a.strict_cache}, {"retry_failures", a.retry_failures}};
    manifest["concurrency"] = a.concurrency;
    manifest["ingest"] = {{"rows_read", ingest.report.rows_read}, {"dropped", dropped}};
    manifest["batch"] = {{"total", rep.total},
                         {"newly_screened", rep.newly_screened},
                         {"served_from_cache", rep.served_from_cache},
                         {"failures", failures},
                         {"corrupt_cache_lines", rep.cache_warnings.size()}};
    write_json(out_dir / "manifest.json", manifest);

    io.out << "screened " << rep.total << " sources: " << rep.newly_screened << " new, " << rep.served_from_cache
           << " from cache, " << rep.failures.size() << " failed\n"
           << "verdicts: " << (out_dir / "verdicts.csv").string() << "\n";
    return rep.failures.empty() ? kSuccess : kCompletedWithFailures;
}

// ------------------------------------------------------- validate / compare

struct VerdictFile {
    std::map<std::string, Verdict> verdicts;
    std::set<std::string> failed;

    [[nodiscard]] std::set<std::string> ids() const
    {
        auto all = failed;
        for (const auto& [id, v] : verdicts) {
            all.insert(id);
        }
        return all;
    }
};

VerdictFile read_verdicts(const fs::path& path)
{
    auto table = csv::Table::load(path);
    const auto id_col = table.require("id");
    const auto verdict_col = table.require("verdict");
    VerdictFile vf;
    for (std::size_t i = 0; i < table.rows().size(); ++i) {
        const auto& row = table.rows()[i];
        auto id = trimmed(std::string(csv::Table::cell(row, id_col)));
        auto value = trimmed(std::string(csv::Table::cell(row, verdict_col)));
        if (id.empty()) {
            continue;
        }
        if (vf.verdicts.contains(id) || vf.failed.contains(id)) {
            throw Error(ErrorKind::InvalidLabel, path.string() + ": duplicate id " + id);
        }
        if (value == "error") {
            vf.failed.insert(id);
        } else if (auto v = verdict_from_string(value)) {
            vf.verdicts.emplace(id, *v);
        } else {
            throw Error(ErrorKind::InvalidLabel,
                        path.string() + " row " + std::to_string(i + 1) + ": verdict must be include, exclude or error");
        }
    }
    return vf;
}

std::vector<std::string> review_names(const std::vector<std::string>& names, const std::vector<std::string>& gold)
{
    if (!names.empty() && names.size() != gold.size()) {
        throw Error(ErrorKind::Usage, "give one --name per review or none");
    }
    if (!names.empty()) {
        return names;
    }
    std::vector<std::string> out;
    for (const auto& g : gold) {
        out.push_back(fs::path(g).stem().string());
    }
    return out;
}

ReviewScore score_file(const std::string& name, const VerdictFile& vf, const std::vector<GoldLabel>& gold)
{
    std::set<std::string> labelled;
    for (const auto& g : gold) {
        labelled.insert(g.source_id);
    }
    for (const auto& id : vf.failed) {
        if (!labelled.contains(id)) {
            throw Error(ErrorKind::UnlabelledSource, "no gold label for source " + id + " in review " + name);
        }
    }
    try {
        return score_review(name, vf.verdicts, gold, vf.failed.size());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::UnlabelledSource) {
            throw Error(e.kind(), std::string(e.what()) + " in review " + name);
        }
        throw;
    }
}

struct ValidateArgs {
    std::vector<std::string> verdicts;
    std::vector<std::string> gold;
    std::vector<std::string> names;
    std::string out;
};

int cmd_validate(const ValidateArgs& a, const std::vector<std::string>& argv, Streams io)
{
    auto manifest = manifest_base("validate", argv);
    if (a.verdicts.size() != a.gold.size()) {
        throw Error(ErrorKind::Usage, "give one --gold file per --verdicts file");
    }
    const auto names = review_names(a.names, a.gold);
    std::vector<ReviewScore> scores;
    json inputs = json::array();
    for (std::size_t i = 0; i < a.gold.size(); ++i) {
        auto gold = read_gold_labels(a.gold[i]);
        auto vf = read_verdicts(a.verdicts[i]);
        scores.push_back(score_file(names[i], vf, gold));
        inputs.push_back({{"review", names[i]},
                          {"verdicts", {{"path", a.verdicts[i]}, {"sha256", file_digest(a.verdicts[i])}}},
                          {"gold", {{"path", a.gold[i]}, {"sha256", file_digest(a.gold[i])}}}});
    }
    auto rep = report(scores, aggregate(scores));
    io.out << rep.text;
    if (!a.out.empty()) {
        const fs::path dir = a.out;
        write_json(dir / "report.json", rep.machine);
        write_text(dir / "report.txt", rep.text);
        manifest["inputs"] = inputs;
        manifest["finished_at"] = format_timestamp(now_ms());
        write_json(dir / "manifest.json", manifest);
    }
    return kSuccess;
}

struct CompareArgs {
    std::vector<std::string> cot;
    std::vector<std::string> zeroshot;
    std::vector<std::string> gold;
    std::vector<std::string> names;
    std::string out;
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv, Streams io)
{
    auto manifest = manifest_base("compare", argv);
    if (a.cot.size() != a.gold.size() || a.zeroshot.size() != a.gold.size()) {
        throw Error(ErrorKind::Usage, "give one --cot and one --zeroshot file per --gold file");
    }
    const auto names = review_names(a.names, a.gold);
    MethodScores cot{"cot", {}, {}};
    MethodScores zs{"zeroshot", {}, {}};
    json inputs = json::array();
    for (std::size_t i = 0; i < a.gold.size(); ++i) {
        auto gold = read_gold_labels(a.gold[i]);
        auto c = read_verdicts(a.cot[i]);
        auto z = read_verdicts(a.zeroshot[i]);
        if (c.ids() != z.ids()) {
            throw Error(ErrorKind::SourceSetMismatch,
                        "review " + names[i] + ": " + a.cot[i] + " and " + a.zeroshot[i] + " cover different sources");
        }
        cot.reviews.push_back(score_file(names[i], c, gold));
        zs.reviews.push_back(score_file(names[i], z, gold));
        inputs.push_back({{"review", names[i]},
                          {"cot", {{"path", a.cot[i]}, {"sha256", file_digest(a.cot[i])}}},
                          {"zeroshot", {{"path", a.zeroshot[i]}, {"sha256", file_digest(a.zeroshot[i])}}},
                          {"gold", {{"path", a.gold[i]}, {"sha256", file_digest(a.gold[i])}}}});
    }
    cot.aggregate = aggregate(cot.reviews);
    zs.aggregate = aggregate(zs.reviews);
    auto rep = compare_report(cot, zs);
    io.out << rep.text;
    if (!a.out.empty()) {
        const fs::path dir = a.out;
        write_json(dir / "comparison.json", rep.machine);
        write_text(dir / "comparison.txt", rep.text);
        manifest["inputs"] = inputs;
        manifest["finished_at"] = format_timestamp(now_ms());
        write_json(dir / "manifest.json", manifest);
    }
    return kSuccess;
}

// --------------------------------------------------------------------- cache

int cmd_cache_inspect(const std::string& path, bool strict, Streams io)
{
    auto cache = load_cache(path, strict ? CachePolicy::strict : CachePolicy::skip_corrupt);
    std::size_t failed = 0;
    for (const auto& [key, r] : cache.records) {
        failed += !r.ok();
        io.out << r.source_id << '\t' << key.content_hash.substr(0, 12) << '\t' << to_string(r.method) << '\t'
               << r.model_name << '\t' << r.template_version << '\t'
               << (r.ok() ? std::string(to_string(*r.verdict)) : "error:" + std::string(to_string(r.failure->kind)))
               << '\t' << r.transcript.size() << " messages\t" << format_timestamp(r.finished_at) << '\n';
    }
    io.out << cache.records.size() << " live records (" << failed << " failed) in " << cache.lines << " lines";
    if (!cache.warnings.empty()) {
        io.out << ", " << cache.warnings.size() << " corrupt lines skipped";
    }
    io.out << '\n';
    return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, Streams io)
{
    LogRedirect redirect(io.err);

    CLI::App app{"Screen scholarly sources against scoping-review criteria with an LLM", "screenr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    DescribeArgs describe;
    auto* d = app.add_subcommand("describe", "Render a PCC review description to a file");
    d->add_option("--title", describe.parts.title, "Review title");
    d->add_option("--objective", describe.parts.objective, "Review objective or question");
    d->add_option("--population", describe.parts.population, "Population criterion");
    d->add_option("--concept", describe.parts.core_concept, "Concept criterion");
    d->add_option("--context", describe.parts.context, "Context criterion");
    d->add_option("--criterion", describe.parts.extra_criteria, "Additional criterion (repeatable)");
    auto* free_text = d->add_option("--free-text", describe.free_text_file, "Use this file's text verbatim")
                          ->check(CLI::ExistingFile);
    auto* interactive = d->add_flag("--interactive", describe.interactive, "Prompt for missing fields on stdin");
    free_text->excludes(interactive);
    d->add_option("--output,-o", describe.output, "Where to write the description")->required();

    ScreenArgs screen;
    auto* s = app.add_subcommand("screen", "Screen sources, caching results for resumption");
    s->add_option("--input", screen.input, "Sources CSV/TSV")->required()->check(CLI::ExistingFile);
    s->add_option("--review", screen.review, "Review description text file")->required()->check(CLI::ExistingFile);
    s->add_option("--method", screen.method, "Screening protocol")
        ->check(CLI::IsMember({"cot", "zeroshot"}))
        ->capture_default_str();
    s->add_option("--model", screen.model, "Model name")->capture_default_str();
    auto* sample = s->add_option("--sample", screen.sample, "Screen a random subset of N sources")
                       ->check(CLI::PositiveNumber);
    s->add_option("--seed", screen.seed, "Seed for --sample")->needs(sample)->capture_default_str();
    s->add_option("--cache", screen.cache, "Cache file (default <out>/cache.jsonl)");
    s->add_option("--concurrency", screen.concurrency, "Parallel screenings")
        ->check(CLI::Range(std::size_t{1}, std::size_t{64}))
        ->capture_default_str();
    s->add_option("--out", screen.out, "Output directory")->required();
    s->add_option("--backend", screen.backend, "live, or scripted:<file> for a replayed JSON script")
        ->capture_default_str();
    s->add_flag("--strict-cache", screen.strict_cache, "Abort on corrupt cache lines instead of skipping them");
    s->add_flag("--retry-failures,!--no-retry-failures", screen.retry_failures,
                "Re-screen sources whose cached result is a failure (default on)");
    s->add_option("--id-column", screen.columns.id)->capture_default_str();
    s->add_option("--title-column", screen.columns.title)->capture_default_str();
    s->add_option("--abstract-column", screen.columns.abstract)->capture_default_str();
    s->add_option("--templates", screen.templates, "Directory of prompt templates")->check(CLI::ExistingDirectory);
    s->add_option("--api-key-file", screen.api_key_file, "File holding the API key (overrides OPENAI_API_KEY)")
        ->check(CLI::ExistingFile);
    s->add_option("--base-url", screen.base_url, "API base URL (overrides SCREENR_BASE_URL)");
    s->add_option("--temperature", screen.temperature)->check(CLI::Range(0.0, 2.0))->capture_default_str();
    s->add_option("--max-retries", screen.max_retries)->check(CLI::Range(0, 20))->capture_default_str();
    s->add_option("--timeout", screen.timeout_s, "Request timeout in seconds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    s->add_option("--requests-per-minute", screen.rpm)->check(CLI::NonNegativeNumber)->capture_default_str();

    ValidateArgs validate;
    auto* v = app.add_subcommand("validate", "Score verdicts against gold-standard decisions");
    v->add_option("--verdicts", validate.verdicts, "verdicts.csv from screen (repeatable, one per review)")
        ->required()
        ->check(CLI::ExistingFile);
    v->add_option("--gold", validate.gold, "Gold label CSV (repeatable, paired with --verdicts)")
        ->required()
        ->check(CLI::ExistingFile);
    v->add_option("--name", validate.names, "Review name (repeatable; default: gold file stem)");
    v->add_option("--out", validate.out, "Directory for report.json, report.txt and manifest.json");

    CompareArgs compare;
    auto* c = app.add_subcommand("compare", "Compare chain-of-thought and zero-shot verdicts");
    c->add_option("--cot", compare.cot, "Chain-of-thought verdicts (repeatable)")->required()->check(CLI::ExistingFile);
    c->add_option("--zeroshot", compare.zeroshot, "Zero-shot verdicts (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--gold", compare.gold, "Gold label CSV (repeatable)")->required()->check(CLI::ExistingFile);
    c->add_option("--name", compare.names, "Review name (repeatable)");
    c->add_option("--out", compare.out, "Directory for comparison.json, comparison.txt and manifest.json");

    std::string cache_path;
    bool inspect_strict = false;
    auto* cache = app.add_subcommand("cache", "Cache utilities");
    cache->require_subcommand(1);
    auto* inspect = cache->add_subcommand("inspect", "List live cache records");
    inspect->add_option("path", cache_path, "Cache file")->required();
    inspect->add_flag("--strict-cache", inspect_strict);

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& arg : args) {
        argv.push_back(arg.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, io.out, io.err);
        return code == 0 ? kSuccess : kUsageError;
    }

    try {
        if (d->parsed()) {
            return cmd_describe(describe, io);
        }
        if (s->parsed()) {
            return cmd_screen(screen, args, io);
        }
        if (v->parsed()) {
            return cmd_validate(validate, args, io);
        }
        if (c->parsed()) {
            return cmd_compare(compare, args, io);
        }
        if (inspect->parsed()) {
            return cmd_cache_inspect(cache_path, inspect_strict, io);
        }
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        io.err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}

}  // namespace screenr::cli
