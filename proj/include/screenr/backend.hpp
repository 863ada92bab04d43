#pragma once

#include "screenr/conversation.hpp"
#include "screenr/error.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace screenr {

/**
 * Secret API key. The only way to read the value is reveal(); streaming,
 * formatting and JSON conversion all print a placeholder.
 */
class ApiKey {
public:
    ApiKey() = default;
    explicit ApiKey(std::string value) : value_(std::move(value)) {}

    [[nodiscard]] const std::string& reveal() const noexcept { return value_; }
    [[nodiscard]] bool empty() const noexcept { return value_.empty(); }

    friend std::ostream& operator<<(std::ostream& os, const ApiKey& key);

private:
    std::string value_;
};

inline constexpr std::string_view kApiKeyEnv = "OPENAI_API_KEY";
inline constexpr std::string_view kBaseUrlEnv = "SCREENR_BASE_URL";
inline constexpr std::string_view kDefaultBaseUrl = "https://api.openai.com";

struct BackendConfig {
    std::string base_url{kDefaultBaseUrl};
    std::string model_name = "gpt-4";
    ApiKey api_key;
    double temperature = 0.0;
    int max_retries = 5;
    std::chrono::milliseconds request_timeout{std::chrono::seconds(120)};
    /// Token-bucket rate for outgoing requests; <= 0 disables limiting.
    double requests_per_minute = 60.0;

    /// Throws Error(Usage) on out-of-range fields, Error(MissingApiKey) without a key.
    void validate() const;

    /// Defaults overlaid with OPENAI_API_KEY and SCREENR_BASE_URL.
    [[nodiscard]] static BackendConfig from_environment();
};

std::ostream& operator<<(std::ostream& os, const BackendConfig& cfg);
void to_json(nlohmann::json& j, const BackendConfig& cfg);

struct CompletionUsage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    CompletionUsage& operator+=(const CompletionUsage& other) noexcept
    {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }

    friend bool operator==(const CompletionUsage&, const CompletionUsage&) = default;
};

struct Completion {
    Message message;
    CompletionUsage usage;
};

/// A chat-completion model. Implementations must be safe to call from several threads.
class Backend {
public:
    virtual ~Backend() = default;

    /// Next assistant message for `conv`. Throws Error with a backend kind.
    [[nodiscard]] virtual Completion complete(const Conversation& conv) = 0;

    [[nodiscard]] virtual std::string model_name() const = 0;
};

// ---------------------------------------------------------------- scripted

/// One scripted reply: assistant text, or an error the call raises instead.
using ScriptStep = std::variant<std::string, ErrorKind>;

/**
 * Deterministic backend replaying a fixed list of replies in order.
 * Every received conversation is recorded, including calls that hit an
 * exhausted script.
 */
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> script, std::string model_name = "scripted");
    explicit ScriptedBackend(std::vector<ScriptStep> script, std::string model_name = "scripted");

    /// Loads a JSON array whose items are strings or {"error": "<ErrorKind>"}.
    [[nodiscard]] static std::unique_ptr<ScriptedBackend> from_file(const std::string& path,
                                                                    std::string model_name);

    Completion complete(const Conversation& conv) override;
    std::string model_name() const override { return model_name_; }

    [[nodiscard]] std::size_t calls() const;
    [[nodiscard]] std::size_t remaining() const;
    [[nodiscard]] std::vector<Conversation> received() const;

private:
    mutable std::mutex mutex_;
    std::deque<ScriptStep> script_;
    std::vector<Conversation> received_;
    std::string model_name_;
};

// -------------------------------------------------------------------- live

/// Token bucket shared by every request a LiveBackend sends.
class RateLimiter {
public:
    explicit RateLimiter(double per_minute, double burst = 1.0);

    /// Blocks until a request may be sent.
    void acquire();

private:
    using Clock = std::chrono::steady_clock;

    std::mutex mutex_;
    double rate_per_second_;
    double burst_;
    double tokens_;
    Clock::time_point last_;
};

struct RetryPolicy {
    std::chrono::milliseconds base{1000};
    double factor = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Request body for POST {base_url}/v1/chat/completions.
[[nodiscard]] nlohmann::json make_request_body(const BackendConfig& cfg, const Conversation& conv);

/// Parses choices[0].message.content and usage. Throws Error(MalformedResponse).
[[nodiscard]] Completion parse_response_body(std::string_view body);

/// Maps a non-2xx status to the error kind it raises.
[[nodiscard]] ErrorKind classify_status(int status) noexcept;

/// Replaces every occurrence of the key in `text`.
[[nodiscard]] std::string redact(std::string text, const ApiKey& key);

/**
 * Client for any OpenAI-compatible chat completions endpoint.
 *
 * Auth failures and malformed bodies fail immediately. Rate limiting,
 * 5xx responses, timeouts and transport errors are retried up to
 * max_retries times with full-jitter exponential backoff.
 */
class LiveBackend : public Backend {
public:
    explicit LiveBackend(BackendConfig cfg, std::shared_ptr<RateLimiter> limiter = nullptr,
                         Sleeper sleeper = {}, RetryPolicy retry = {}, std::uint64_t jitter_seed = 0);

    Completion complete(const Conversation& conv) override;
    std::string model_name() const override { return cfg_.model_name; }

    [[nodiscard]] std::uint64_t total_attempts() const noexcept { return attempts_.load(); }

private:
    Completion attempt(const Conversation& conv);
    std::chrono::milliseconds backoff(int retry);

    BackendConfig cfg_;
    std::shared_ptr<RateLimiter> limiter_;
    Sleeper sleeper_;
    RetryPolicy retry_;
    std::mutex rng_mutex_;
    std::mt19937_64 rng_;
    std::atomic<std::uint64_t> attempts_{0};
};

}  // namespace screenr
