#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "screenr/backend.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <thread>

using namespace screenr;
using namespace std::chrono_literals;

namespace {

constexpr const char* kSentinelKey = "sk-SENTINEL-7f3a9c2e41b8d6";

std::string ok_body(const std::string& content, int prompt = 11, int completion = 3)
{
    nlohmann::json j{{"id", "chatcmpl-1"},
                     {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}},
                     {"usage", {{"prompt_tokens", prompt}, {"completion_tokens", completion}}}};
    return j.dump();
}

// Local OpenAI-compatible endpoint whose replies are chosen per test.
class FakeServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit FakeServer(Handler handler) : handler_(std::move(handler))
    {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(mutex_);
                bodies_.push_back(req.body);
                auth_.push_back(req.get_header_value("Authorization"));
            }
            ++hits_;
            handler_(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~FakeServer()
    {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    [[nodiscard]] int hits() const { return hits_; }
    [[nodiscard]] std::vector<std::string> bodies() const
    {
        std::lock_guard lock(mutex_);
        return bodies_;
    }
    [[nodiscard]] std::vector<std::string> auth() const
    {
        std::lock_guard lock(mutex_);
        return auth_;
    }

private:
    Handler handler_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<int> hits_{0};
    mutable std::mutex mutex_;
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_;
};

BackendConfig config_for(const FakeServer& server)
{
    BackendConfig cfg;
    cfg.base_url = server.url();
    cfg.api_key = ApiKey(kSentinelKey);
    cfg.requests_per_minute = 0;
    cfg.request_timeout = 2s;
    return cfg;
}

struct SleepLog {
    std::vector<std::chrono::milliseconds> sleeps;
    Sleeper sleeper()
    {
        return [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
    }
};

Conversation convo()
{
    return Conversation({Message::system("sys"), Message::user("hello")});
}

ErrorKind kind_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no screenr::Error thrown";
    return ErrorKind::Usage;
}

}  // namespace

TEST(ScriptedBackend, ReplaysInOrder)
{
    ScriptedBackend b(std::vector<std::string>{"a", "b"});
    EXPECT_EQ(b.complete(convo()).message, Message::assistant("a"));
    EXPECT_EQ(b.complete(convo()).message, Message::assistant("b"));
    EXPECT_EQ(b.calls(), 2u);
    EXPECT_EQ(b.remaining(), 0u);
}

TEST(ScriptedBackend, EchoesScriptedVerdict)
{
    ScriptedBackend b(std::vector<std::string>{"EXCLUDE"});
    auto c = b.complete(convo());
    EXPECT_EQ(c.message.role(), Role::assistant);
    EXPECT_EQ(c.message.content(), "EXCLUDE");
    EXPECT_EQ(c.usage, CompletionUsage{});
}

TEST(ScriptedBackend, ExhaustionIsAnError)
{
    ScriptedBackend b(std::vector<std::string>{"a"});
    (void)b.complete(convo());
    EXPECT_EQ(kind_of([&] { (void)b.complete(convo()); }), ErrorKind::ScriptExhausted);
    EXPECT_EQ(b.received().size(), 2u);
}

TEST(ScriptedBackend, RecordsReceivedConversations)
{
    ScriptedBackend b(std::vector<std::string>{"a", "b", "c"});
    auto c1 = convo();
    auto c2 = c1.append(Message::assistant("a")).append(Message::user("more"));
    (void)b.complete(c1);
    (void)b.complete(c2);
    auto log = b.received();
    ASSERT_EQ(log.size(), b.calls());
    EXPECT_EQ(log[0], c1);
    EXPECT_EQ(log[1], c2);
}

TEST(ScriptedBackend, ScriptedErrorsAndFiles)
{
    ScriptedBackend b(std::vector<ScriptStep>{ErrorKind::ServerError, std::string("ok")}, "m");
    EXPECT_EQ(kind_of([&] { (void)b.complete(convo()); }), ErrorKind::ServerError);
    EXPECT_EQ(b.complete(convo()).message.content(), "ok");
    EXPECT_EQ(b.model_name(), "m");
}

TEST(Wire, RequestBodyCarriesOrderedRoles)
{
    BackendConfig cfg;
    cfg.model_name = "gpt-4";
    cfg.temperature = 0.0;
    auto body = make_request_body(cfg, Conversation({Message::system("s"), Message::user("u"), Message::assistant("a")}));
    EXPECT_EQ(body["model"], "gpt-4");
    EXPECT_EQ(body["temperature"], 0.0);
    ASSERT_EQ(body["messages"].size(), 3u);
    EXPECT_EQ(body["messages"][0], (nlohmann::json{{"role", "system"}, {"content", "s"}}));
    EXPECT_EQ(body["messages"][1]["role"], "user");
    EXPECT_EQ(body["messages"][2]["role"], "assistant");
}

TEST(Wire, ParsesResponseAndUsage)
{
    auto c = parse_response_body(ok_body("INCLUDE", 120, 4));
    EXPECT_EQ(c.message, Message::assistant("INCLUDE"));
    EXPECT_EQ(c.usage.prompt_tokens, 120u);
    EXPECT_EQ(c.usage.completion_tokens, 4u);

    auto no_usage = parse_response_body(R"({"choices":[{"message":{"role":"assistant","content":"x"}}]})");
    EXPECT_EQ(no_usage.usage, CompletionUsage{});
}

TEST(Wire, MalformedResponses)
{
    for (const char* body : {"not json", "{}", R"({"choices":[]})", R"({"choices":[{"message":{"role":"assistant"}}]})",
                             R"({"choices":[{"message":{"role":"assistant","content":"  "}}]})",
                             R"({"choices":[{"message":{"role":"user","content":"x"}}]})"}) {
        EXPECT_EQ(kind_of([&] { (void)parse_response_body(body); }), ErrorKind::MalformedResponse) << body;
    }
}

TEST(Wire, StatusClassification)
{
    EXPECT_EQ(classify_status(401), ErrorKind::AuthError);
    EXPECT_EQ(classify_status(403), ErrorKind::AuthError);
    EXPECT_EQ(classify_status(429), ErrorKind::RateLimited);
    EXPECT_EQ(classify_status(500), ErrorKind::ServerError);
    EXPECT_EQ(classify_status(503), ErrorKind::ServerError);
    EXPECT_EQ(classify_status(400), ErrorKind::RequestRejected);
}

TEST(LiveBackend, SuccessReturnsAssistantMessageAndUsage)
{
    FakeServer server([](const auto&, auto& res) { res.set_content(ok_body("EXCLUDE"), "application/json"); });
    SleepLog log;
    LiveBackend b(config_for(server), nullptr, log.sleeper());
    auto c = b.complete(convo());
    EXPECT_EQ(c.message.content(), "EXCLUDE");
    EXPECT_EQ(c.usage.prompt_tokens, 11u);
    EXPECT_EQ(b.total_attempts(), 1u);
    EXPECT_TRUE(log.sleeps.empty());
    ASSERT_EQ(server.auth().size(), 1u);
    EXPECT_EQ(server.auth()[0], std::string("Bearer ") + kSentinelKey);
}

TEST(LiveBackend, WireFidelity)
{
    FakeServer server([](const auto&, auto& res) { res.set_content(ok_body("ok"), "application/json"); });
    auto cfg = config_for(server);
    cfg.model_name = "my-model";
    cfg.temperature = 0.5;
    LiveBackend b(cfg);
    auto conv = Conversation({Message::system("s"), Message::user("ü ✓"), Message::assistant("a"), Message::user("u2")});
    (void)b.complete(conv);
    auto body = nlohmann::json::parse(server.bodies().at(0));
    EXPECT_EQ(body["model"], "my-model");
    EXPECT_EQ(body["temperature"], 0.5);
    ASSERT_EQ(body["messages"].size(), 4u);
    const char* roles[] = {"system", "user", "assistant", "user"};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(body["messages"][i]["role"], roles[i]);
        EXPECT_EQ(body["messages"][i]["content"], conv[i].content());
    }
}

TEST(LiveBackend, AuthErrorFailsFastWithoutRetry)
{
    FakeServer server([](const auto&, auto& res) {
        res.status = 401;
        res.set_content(std::string(R"({"error":{"message":"Incorrect API key provided: )") + kSentinelKey + "\"}}",
                        "application/json");
    });
    SleepLog log;
    LiveBackend b(config_for(server), nullptr, log.sleeper());
    try {
        (void)b.complete(convo());
        FAIL() << "expected AuthError";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AuthError);
        EXPECT_EQ(std::string(e.what()).find(kSentinelKey), std::string::npos) << e.what();
    }
    EXPECT_EQ(server.hits(), 1);
    EXPECT_EQ(b.total_attempts(), 1u);
    EXPECT_TRUE(log.sleeps.empty());
}

TEST(LiveBackend, RetriesRateLimitThenSucceeds)
{
    std::atomic<int> calls{0};
    FakeServer server([&](const auto&, auto& res) {
        if (calls++ < 2) {
            res.status = 429;
            res.set_content(R"({"error":{"message":"slow down"}})", "application/json");
        } else {
            res.set_content(ok_body("INCLUDE"), "application/json");
        }
    });
    SleepLog log;
    LiveBackend b(config_for(server), nullptr, log.sleeper(), RetryPolicy{1000ms, 2.0}, 42);
    EXPECT_EQ(b.complete(convo()).message.content(), "INCLUDE");
    EXPECT_EQ(server.hits(), 3);
    EXPECT_EQ(b.total_attempts(), 3u);
    ASSERT_EQ(log.sleeps.size(), 2u);
    // Full jitter: each delay lies in [0, base * factor^retry].
    EXPECT_LE(log.sleeps[0], 1000ms);
    EXPECT_LE(log.sleeps[1], 2000ms);
}

TEST(LiveBackend, RetriesStopAtMaxRetries)
{
    FakeServer server([](const auto&, auto& res) { res.status = 503; });
    SleepLog log;
    auto cfg = config_for(server);
    cfg.max_retries = 3;
    LiveBackend b(cfg, nullptr, log.sleeper());
    EXPECT_EQ(kind_of([&] { (void)b.complete(convo()); }), ErrorKind::ServerError);
    EXPECT_EQ(server.hits(), 4);
    EXPECT_EQ(log.sleeps.size(), 3u);
}

TEST(LiveBackend, BackoffCeilingGrowsGeometrically)
{
    FakeServer server([](const auto&, auto& res) { res.status = 500; });
    SleepLog log;
    auto cfg = config_for(server);
    cfg.max_retries = 5;
    LiveBackend b(cfg, nullptr, log.sleeper(), RetryPolicy{100ms, 2.0}, 7);
    EXPECT_THROW((void)b.complete(convo()), Error);
    ASSERT_EQ(log.sleeps.size(), 5u);
    for (std::size_t i = 0; i < log.sleeps.size(); ++i) {
        EXPECT_GE(log.sleeps[i].count(), 0);
        EXPECT_LE(log.sleeps[i].count(), 100 << i);
    }
}

TEST(LiveBackend, MalformedResponseNotRetried)
{
    FakeServer server([](const auto&, auto& res) { res.set_content(R"({"choices":[]})", "application/json"); });
    SleepLog log;
    LiveBackend b(config_for(server), nullptr, log.sleeper());
    EXPECT_EQ(kind_of([&] { (void)b.complete(convo()); }), ErrorKind::MalformedResponse);
    EXPECT_EQ(server.hits(), 1);
}

TEST(LiveBackend, TimeoutIsRetried)
{
    FakeServer server([](const auto&, auto& res) {
        std::this_thread::sleep_for(600ms);
        res.set_content(ok_body("late"), "application/json");
    });
    SleepLog log;
    auto cfg = config_for(server);
    cfg.request_timeout = 150ms;
    cfg.max_retries = 1;
    LiveBackend b(cfg, nullptr, log.sleeper());
    EXPECT_EQ(kind_of([&] { (void)b.complete(convo()); }), ErrorKind::Timeout);
    EXPECT_EQ(b.total_attempts(), 2u);
    EXPECT_EQ(log.sleeps.size(), 1u);
}

TEST(LiveBackend, ConnectionRefusedIsNetworkError)
{
    BackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.api_key = ApiKey(kSentinelKey);
    cfg.max_retries = 0;
    cfg.requests_per_minute = 0;
    LiveBackend b(cfg);
    try {
        (void)b.complete(convo());
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::NetworkError || e.kind() == ErrorKind::Timeout) << e.what();
        EXPECT_EQ(std::string(e.what()).find(kSentinelKey), std::string::npos);
    }
}

TEST(LiveBackend, BaseUrlPathPrefix)
{
    FakeServer server([](const auto&, auto& res) { res.set_content(ok_body("x"), "application/json"); });
    auto cfg = config_for(server);
    cfg.base_url = server.url() + "/";
    LiveBackend b(cfg);
    EXPECT_EQ(b.complete(convo()).message.content(), "x");
}

TEST(BackendConfig, ValidationAndMissingKey)
{
    BackendConfig cfg;
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::MissingApiKey);
    try {
        cfg.validate();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("OPENAI_API_KEY"), std::string::npos);
    }
    cfg.api_key = ApiKey("k");
    cfg.temperature = 2.5;
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Usage);
    cfg.temperature = 0;
    cfg.model_name.clear();
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Usage);
}

TEST(BackendConfig, DefaultsMatchContract)
{
    BackendConfig cfg;
    EXPECT_EQ(cfg.model_name, "gpt-4");
    EXPECT_EQ(cfg.temperature, 0.0);
    EXPECT_EQ(cfg.max_retries, 5);
    EXPECT_EQ(cfg.request_timeout, 120s);
    EXPECT_EQ(cfg.requests_per_minute, 60.0);
}

TEST(BackendConfig, FromEnvironment)
{
    ::setenv("OPENAI_API_KEY", kSentinelKey, 1);
    ::setenv("SCREENR_BASE_URL", "http://localhost:9999", 1);
    auto cfg = BackendConfig::from_environment();
    ::unsetenv("OPENAI_API_KEY");
    ::unsetenv("SCREENR_BASE_URL");
    EXPECT_EQ(cfg.api_key.reveal(), kSentinelKey);
    EXPECT_EQ(cfg.base_url, "http://localhost:9999");
}

TEST(SecretHygiene, FormattingNeverRevealsKey)
{
    BackendConfig cfg;
    cfg.api_key = ApiKey(kSentinelKey);
    std::ostringstream os;
    os << cfg << cfg.api_key;
    nlohmann::json j = cfg;
    for (const auto& text : {os.str(), j.dump()}) {
        EXPECT_EQ(text.find(kSentinelKey), std::string::npos) << text;
        EXPECT_NE(text.find("[redacted]"), std::string::npos);
    }
    EXPECT_EQ(redact(std::string("a ") + kSentinelKey + " b " + kSentinelKey, cfg.api_key), "a [redacted] b [redacted]");
}

TEST(RateLimiter, SpacesRequests)
{
    RateLimiter limiter(600.0);  // one token per 100 ms, burst 1
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) {
        limiter.acquire();
    }
    auto elapsed = std::chrono::steady_clock::now() - start;
    EXPECT_GE(elapsed, 280ms);
    EXPECT_LT(elapsed, 2s);
}

TEST(RateLimiter, DisabledNeverBlocks)
{
    RateLimiter limiter(0.0);
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 1000; ++i) {
        limiter.acquire();
    }
    EXPECT_LT(std::chrono::steady_clock::now() - start, 100ms);
}
