#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "screenr/batch.hpp"
#include "screenr/cli.hpp"
#include "screenr/csv.hpp"

#include "../support/test_support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <sstream>
#include <thread>

using namespace screenr;
using nlohmann::json;
using screenr::support::TempDir;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSentinel = "sk-SENTINEL-7f3a9c2e41b8d6";

struct RunResult {
    int code;
    std::string out;
    std::string err;
};

RunResult run_cli(std::vector<std::string> args, const std::string& stdin_text = "")
{
    args.insert(args.begin(), "screenr");
    std::istringstream in(stdin_text);
    std::ostringstream out;
    std::ostringstream err;
    int code = cli::run(args, {in, out, err});
    return {code, out.str(), err.str()};
}

// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
public:
    EnvGuard(const char* name, const std::string& value) : name_(name)
    {
        if (const char* old = std::getenv(name)) {
            old_ = old;
        }
        ::setenv(name, value.c_str(), 1);
    }
    ~EnvGuard()
    {
        if (old_) {
            ::setenv(name_, old_->c_str(), 1);
        } else {
            ::unsetenv(name_);
        }
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

class NoEnv {
public:
    explicit NoEnv(const char* name) : name_(name)
    {
        if (const char* old = std::getenv(name)) {
            old_ = old;
        }
        ::unsetenv(name);
    }
    ~NoEnv()
    {
        if (old_) {
            ::setenv(name_, old_->c_str(), 1);
        }
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

std::string fx(const std::string& name)
{
    return support::fixture(name).string();
}

json read_json(const fs::path& p)
{
    return json::parse(support::read_file(p));
}

std::vector<std::string> tree_contents(const fs::path& dir)
{
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out.push_back(support::read_file(e.path()));
        }
    }
    return out;
}

std::vector<std::string> screen_args(const TempDir& dir, const std::string& input, const std::string& script,
                                     const std::string& method = "cot")
{
    return {"screen", "--input", input, "--review", fx("review.txt"), "--method", method,
            "--backend", "scripted:" + script, "--out", (dir / "out").string()};
}

}  // namespace

TEST(CliDescribe, WritesStructuredDescription)
{
    TempDir dir;
    auto r = run_cli({"describe", "--title", "Alpacas", "--objective", "Map alpaca therapy", "--population",
                      "Older adults", "--concept", "Alpaca-assisted therapy", "--context", "Aged care", "--criterion",
                      "English language", "-o", (dir / "review.txt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto text = support::read_file(dir / "review.txt");
    EXPECT_EQ(text.find("Title: Alpacas"), 0u);
    EXPECT_LT(text.find("Population:"), text.find("Concept:"));
    EXPECT_LT(text.find("Concept:"), text.find("Context:"));
    EXPECT_NE(text.find("- English language"), std::string::npos);
}

TEST(CliDescribe, IncompleteFailsWithHint)
{
    TempDir dir;
    auto r = run_cli({"describe", "--objective", "o", "--population", "p", "--context", "c", "-o",
                      (dir / "review.txt").string()});
    EXPECT_EQ(r.code, cli::kUsageError);
    EXPECT_NE(r.err.find("IncompleteDescription"), std::string::npos);
    EXPECT_NE(r.err.find("--concept"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "review.txt"));
}

TEST(CliDescribe, FreeTextAndInteractive)
{
    TempDir dir;
    support::write_file(dir / "free.txt", "Anything at all\n");
    auto r = run_cli({"describe", "--free-text", (dir / "free.txt").string(), "-o", (dir / "a.txt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(support::read_file(dir / "a.txt"), "Anything at all\n");

    r = run_cli({"describe", "--interactive", "--population", "P", "-o", (dir / "b.txt").string()},
                "\nO\nC\nX\n");
    ASSERT_EQ(r.code, 0) << r.err;
    auto text = support::read_file(dir / "b.txt");
    EXPECT_NE(text.find("Objective: O"), std::string::npos);
    EXPECT_NE(text.find("Population: P"), std::string::npos);
    EXPECT_NE(text.find("Concept: C"), std::string::npos);
    EXPECT_NE(text.find("Context: X"), std::string::npos);

    r = run_cli({"describe", "--interactive", "--free-text", (dir / "free.txt").string(), "-o",
                 (dir / "c.txt").string()});
    EXPECT_EQ(r.code, cli::kUsageError);
}

TEST(CliScreen, AlpacaCamelExcluded)
{
    TempDir dir;
    auto r = run_cli(screen_args(dir, fx("camel.csv"), fx("script_camel_cot.json")));
    ASSERT_EQ(r.code, 0) << r.err;
    auto table = csv::Table::load(dir / "out" / "verdicts.csv");
    ASSERT_EQ(table.rows().size(), 1u);
    const auto& row = table.rows()[0];
    EXPECT_EQ(row[table.require("id")], "camel-001");
    EXPECT_EQ(row[table.require("verdict")], "exclude");
    EXPECT_EQ(row[table.require("method")], "cot");
    EXPECT_EQ(row[table.require("model")], "gpt-4");

    auto transcript = parse_transcript(support::read_file(dir / "out" / "transcripts" / "camel-001.txt"));
    EXPECT_EQ(transcript.size(), 7u);
    auto cache = load_cache(dir / "out" / "cache.jsonl");
    EXPECT_EQ(cache.records.size(), 1u);
}

TEST(CliScreen, RerunIsServedFromCacheAndIdentical)
{
    TempDir dir;
    auto first = run_cli(screen_args(dir, fx("sources.csv"), fx("script_cot.json")));
    ASSERT_EQ(first.code, 0) << first.err;
    auto verdicts = support::read_file(dir / "out" / "verdicts.csv");
    auto cache = support::read_file(dir / "out" / "cache.jsonl");
    auto t = support::read_file(dir / "out" / "transcripts" / "alpaca-002.txt");

    // An empty script fails on the first call, so any request would show up as an error.
    support::write_file(dir / "empty.json", "[]");
    auto second = run_cli(screen_args(dir, fx("sources.csv"), (dir / "empty.json").string()));
    ASSERT_EQ(second.code, 0) << second.err;
    EXPECT_NE(second.out.find("0 new, 3 from cache"), std::string::npos) << second.out;
    EXPECT_EQ(support::read_file(dir / "out" / "verdicts.csv"), verdicts);
    EXPECT_EQ(support::read_file(dir / "out" / "cache.jsonl"), cache);
    EXPECT_EQ(support::read_file(dir / "out" / "transcripts" / "alpaca-002.txt"), t);

    auto table = csv::Table::load(dir / "out" / "verdicts.csv");
    std::vector<std::string> got;
    for (const auto& row : table.rows()) {
        got.push_back(row[0] + "=" + row[1]);
    }
    EXPECT_EQ(got, (std::vector<std::string>{"camel-001=exclude", "alpaca-002=include", "alpaca-003=exclude"}));
}

TEST(CliScreen, ManifestRecordsProvenance)
{
    TempDir dir;
    auto args = screen_args(dir, fx("sources.csv"), fx("script_zeroshot.json"), "zeroshot");
    args.insert(args.end(), {"--sample", "3", "--seed", "11"});
    auto r = run_cli(args);
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = read_json(dir / "out" / "manifest.json");
    EXPECT_EQ(m["schema"], "screenr.manifest/1");
    EXPECT_EQ(m["command"], "screen");
    EXPECT_EQ(m["method"], "zeroshot");
    EXPECT_EQ(m["model"], "gpt-4");
    EXPECT_EQ(m["template_version"], PromptTemplates::builtin().version);
    EXPECT_EQ(m["backend"]["kind"], "scripted");
    EXPECT_EQ(m["inputs"]["sources"]["sha256"].get<std::string>().size(), 64u);
    EXPECT_EQ(m["sample"]["n"], 3);
    EXPECT_EQ(m["sample"]["seed"], 11);
    EXPECT_EQ(m["ingest"]["rows_read"], 5);
    EXPECT_EQ(m["ingest"]["dropped"].size(), 2u);
    EXPECT_EQ(m["batch"]["total"], 3);
    EXPECT_EQ(m["batch"]["newly_screened"], 3);
    EXPECT_TRUE(m.contains("started_at"));
    EXPECT_TRUE(m.contains("finished_at"));
}

TEST(CliScreen, FailuresGiveExitCodeTwo)
{
    TempDir dir;
    support::write_file(dir / "script.json",
                        R"(["c","a","EXCLUDE", {"error":"ServerError"}, "c","a","INCLUDE"])");
    auto r = run_cli(screen_args(dir, fx("sources.csv"), (dir / "script.json").string()));
    EXPECT_EQ(r.code, cli::kCompletedWithFailures) << r.err;
    auto table = csv::Table::load(dir / "out" / "verdicts.csv");
    ASSERT_EQ(table.rows().size(), 3u);
    EXPECT_EQ(table.rows()[1][table.require("verdict")], "error");
    EXPECT_EQ(table.rows()[1][table.require("failure")], "ServerError");
    auto m = read_json(dir / "out" / "manifest.json");
    EXPECT_EQ(m["batch"]["failures"].size(), 1u);

    // The failed source is retried by default and only it is re-requested.
    support::write_file(dir / "retry.json", R"(["c","a","INCLUDE"])");
    r = run_cli(screen_args(dir, fx("sources.csv"), (dir / "retry.json").string()));
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("1 new, 2 from cache"), std::string::npos) << r.out;
}

TEST(CliScreen, NoRetryKeepsCachedFailure)
{
    TempDir dir;
    support::write_file(dir / "script.json", R"([{"error":"Timeout"}])");
    auto r = run_cli(screen_args(dir, fx("camel.csv"), (dir / "script.json").string()));
    EXPECT_EQ(r.code, cli::kCompletedWithFailures);
    auto args = screen_args(dir, fx("camel.csv"), (dir / "script.json").string());
    args.push_back("--no-retry-failures");
    support::write_file(dir / "script.json", "[]");
    r = run_cli(args);
    EXPECT_EQ(r.code, cli::kCompletedWithFailures);
    EXPECT_NE(r.out.find("0 new"), std::string::npos) << r.out;
}

TEST(CliScreen, MissingKeyIsAUsageErrorBeforeAnyRequest)
{
    TempDir dir;
    NoEnv no_key("OPENAI_API_KEY");
    auto r = run_cli({"screen", "--input", fx("camel.csv"), "--review", fx("review.txt"), "--out",
                      (dir / "out").string()});
    EXPECT_EQ(r.code, cli::kUsageError);
    EXPECT_NE(r.err.find("MissingApiKey"), std::string::npos);
    EXPECT_NE(r.err.find("OPENAI_API_KEY"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "out" / "cache.jsonl"));
}

TEST(CliScreen, BadArgumentsAreUsageErrors)
{
    TempDir dir;
    auto args = screen_args(dir, fx("camel.csv"), fx("script_camel_cot.json"));
    auto with = [&](std::vector<std::string> extra) {
        auto a = args;
        a.insert(a.end(), extra.begin(), extra.end());
        return run_cli(a).code;
    };
    EXPECT_EQ(with({"--concurrency", "0"}), cli::kUsageError);
    EXPECT_EQ(with({"--seed", "4"}), cli::kUsageError);
    EXPECT_EQ(with({"--sample", "9"}), cli::kUsageError);
    EXPECT_EQ(with({"--backend", "bogus"}), cli::kUsageError);
    EXPECT_EQ(run_cli({"screen"}).code, cli::kUsageError);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    EXPECT_EQ(run_cli({}).code, cli::kUsageError);
}

TEST(CliValidate, ScoresAgainstGoldWithHumanKappa)
{
    TempDir dir;
    ASSERT_EQ(run_cli(screen_args(dir, fx("sources.csv"), fx("script_cot.json"))).code, 0);
    auto r = run_cli({"validate", "--verdicts", (dir / "out" / "verdicts.csv").string(), "--gold", fx("gold.csv"),
                      "--name", "alpaca", "--out", (dir / "report").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rep = read_json(dir / "report" / "report.json");
    EXPECT_EQ(rep["schema"], "screenr.metrics/1");
    const auto& review = rep["reviews"][0];
    EXPECT_EQ(review["review"], "alpaca");
    EXPECT_DOUBLE_EQ(review["accuracy"].get<double>(), 1.0);
    // Reviewers A and B disagree only on camel-001: table (1,0,1,1) gives kappa 0.4.
    EXPECT_NEAR(review["kappa_human_vs_human"].get<double>(), 0.4, 1e-12);
    EXPECT_EQ(support::read_file(dir / "report" / "report.txt"), r.out);
    auto m = read_json(dir / "report" / "manifest.json");
    EXPECT_EQ(m["command"], "validate");
    EXPECT_EQ(m["inputs"][0]["gold"]["sha256"].get<std::string>().size(), 64u);
}

TEST(CliValidate, ErrorVerdictsCountAsFailures)
{
    TempDir dir;
    support::write_file(dir / "v.csv", "id,verdict\ncamel-001,exclude\nalpaca-002,error\nalpaca-003,include\n");
    auto r = run_cli({"validate", "--verdicts", (dir / "v.csv").string(), "--gold", fx("gold.csv"), "--out",
                      (dir / "rep").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rep = read_json(dir / "rep" / "report.json");
    EXPECT_EQ(rep["reviews"][0]["parse_failures"], 1);
    EXPECT_EQ(rep["reviews"][0]["matrix"]["n"], 2);
    EXPECT_DOUBLE_EQ(rep["reviews"][0]["accuracy"].get<double>(), 0.5);

    support::write_file(dir / "bad.csv", "id,verdict\nunknown-9,include\n");
    r = run_cli({"validate", "--verdicts", (dir / "bad.csv").string(), "--gold", fx("gold.csv")});
    EXPECT_EQ(r.code, cli::kUsageError);
    EXPECT_NE(r.err.find("UnlabelledSource"), std::string::npos);
}

TEST(CliCompare, SideBySideAndMismatch)
{
    TempDir cot_dir;
    TempDir zs_dir;
    ASSERT_EQ(run_cli(screen_args(cot_dir, fx("sources.csv"), fx("script_cot.json"))).code, 0);
    ASSERT_EQ(run_cli(screen_args(zs_dir, fx("sources.csv"), fx("script_zeroshot.json"), "zeroshot")).code, 0);
    const auto cot = (cot_dir / "out" / "verdicts.csv").string();
    const auto zs = (zs_dir / "out" / "verdicts.csv").string();
    auto r = run_cli({"compare", "--cot", cot, "--zeroshot", zs, "--gold", fx("gold.csv"), "--out",
                      (cot_dir / "cmp").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto cmp = read_json(cot_dir / "cmp" / "comparison.json");
    EXPECT_EQ(cmp["schema"], "screenr.comparison/1");
    EXPECT_NE(r.out.find("acc[cot]"), std::string::npos);
    EXPECT_NE(r.out.find("1.0000"), std::string::npos);
    EXPECT_NE(r.out.find("0.6667"), std::string::npos);

    support::write_file(cot_dir / "short.csv", "id,verdict\ncamel-001,exclude\n");
    r = run_cli({"compare", "--cot", (cot_dir / "short.csv").string(), "--zeroshot", zs, "--gold", fx("gold.csv")});
    EXPECT_EQ(r.code, cli::kUsageError);
    EXPECT_NE(r.err.find("SourceSetMismatch"), std::string::npos);
}

TEST(CliCache, Inspect)
{
    TempDir dir;
    ASSERT_EQ(run_cli(screen_args(dir, fx("sources.csv"), fx("script_cot.json"))).code, 0);
    auto path = (dir / "out" / "cache.jsonl").string();
    auto r = run_cli({"cache", "inspect", path});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("3 live records (0 failed) in 3 lines"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("alpaca-002"), std::string::npos);

    std::ofstream(path, std::ios::app) << "{not json\n";
    r = run_cli({"cache", "inspect", path});
    EXPECT_NE(r.out.find("1 corrupt lines skipped"), std::string::npos) << r.out;
    r = run_cli({"cache", "inspect", path, "--strict-cache"});
    EXPECT_EQ(r.code, cli::kUsageError);
    EXPECT_NE(r.err.find("CacheCorrupt"), std::string::npos);
}

TEST(CliSecrets, SentinelKeyNeverEscapes)
{
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        // Hostile server echoing the credential back.
        res.status = 401;
        res.set_content(json{{"error", {{"message", "bad key " + req.get_header_value("Authorization")}}}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    TempDir dir;
    support::write_file(dir / "key.txt", std::string(kSentinel) + "\n");
    std::vector<RunResult> runs;
    {
        EnvGuard key("OPENAI_API_KEY", kSentinel);
        runs.push_back(run_cli(screen_args(dir, fx("sources.csv"), fx("script_cot.json"))));
        EXPECT_EQ(runs.back().code, 0);
        runs.push_back(run_cli({"screen", "--input", fx("camel.csv"), "--review", fx("review.txt"), "--out",
                                (dir / "live").string(), "--base-url", "http://127.0.0.1:" + std::to_string(port),
                                "--max-retries", "0"}));
        EXPECT_EQ(runs.back().code, cli::kUsageError);
        EXPECT_NE(runs.back().err.find("AuthError"), std::string::npos) << runs.back().err;
    }
    {
        NoEnv no_key("OPENAI_API_KEY");
        runs.push_back(run_cli({"screen", "--input", fx("camel.csv"), "--review", fx("review.txt"), "--out",
                                (dir / "live2").string(), "--base-url", "http://127.0.0.1:" + std::to_string(port),
                                "--max-retries", "0", "--api-key-file", (dir / "key.txt").string()}));
        EXPECT_EQ(runs.back().code, cli::kUsageError);
    }
    server.stop();
    t.join();

    for (const auto& r : runs) {
        EXPECT_EQ(r.out.find(kSentinel), std::string::npos);
        EXPECT_EQ(r.err.find(kSentinel), std::string::npos);
    }
    fs::remove(dir / "key.txt");
    for (const auto& text : tree_contents(dir.path())) {
        EXPECT_EQ(text.find(kSentinel), std::string::npos);
    }
}
