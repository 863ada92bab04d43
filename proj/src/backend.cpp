#include "screenr/backend.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

namespace screenr {

namespace {

constexpr std::string_view kRedacted = "[redacted]";

}  // namespace

std::ostream& operator<<(std::ostream& os, const ApiKey& key)
{
    return os << (key.empty() ? std::string_view("[unset]") : kRedacted);
}

void BackendConfig::validate() const
{
    if (model_name.empty()) {
        throw Error(ErrorKind::Usage, "model name must not be empty");
    }
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw Error(ErrorKind::Usage, "temperature must lie in [0, 2]");
    }
    if (max_retries < 0) {
        throw Error(ErrorKind::Usage, "max_retries must be non-negative");
    }
    if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
        throw Error(ErrorKind::Usage, "base URL must start with http:// or https://");
    }
    if (api_key.empty()) {
        throw Error(ErrorKind::MissingApiKey,
                    "no API key registered. Set the " + std::string(kApiKeyEnv) +
                        " environment variable (or pass --api-key-file) before screening "
                        "with the live backend");
    }
}

BackendConfig BackendConfig::from_environment()
{
    BackendConfig cfg;
    if (const char* key = std::getenv(std::string(kApiKeyEnv).c_str()); key != nullptr) {
        cfg.api_key = ApiKey(key);
    }
    if (const char* url = std::getenv(std::string(kBaseUrlEnv).c_str()); url != nullptr && *url != '\0') {
        cfg.base_url = url;
    }
    return cfg;
}

std::ostream& operator<<(std::ostream& os, const BackendConfig& cfg)
{
    return os << "BackendConfig{base_url=" << cfg.base_url << ", model=" << cfg.model_name
              << ", api_key=" << cfg.api_key << ", temperature=" << cfg.temperature
              << ", max_retries=" << cfg.max_retries
              << ", timeout_ms=" << cfg.request_timeout.count()
              << ", requests_per_minute=" << cfg.requests_per_minute << "}";
}

void to_json(nlohmann::json& j, const BackendConfig& cfg)
{
    std::ostringstream key;
    key << cfg.api_key;
    j = nlohmann::json{
        {"base_url", cfg.base_url},
        {"model", cfg.model_name},
        {"api_key", key.str()},
        {"temperature", cfg.temperature},
        {"max_retries", cfg.max_retries},
        {"request_timeout_ms", cfg.request_timeout.count()},
        {"requests_per_minute", cfg.requests_per_minute},
    };
}

// ---------------------------------------------------------------- scripted

ScriptedBackend::ScriptedBackend(std::vector<std::string> script, std::string model_name)
    : model_name_(std::move(model_name))
{
    for (auto& text : script) {
        script_.emplace_back(std::move(text));
    }
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptStep> script, std::string model_name)
    : script_(script.begin(), script.end()), model_name_(std::move(model_name))
{
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path, std::string model_name)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::UnreadableFile, "cannot open script file " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::UnreadableFile, "script file " + path + " is not valid JSON: " + e.what());
    }
    if (!doc.is_array()) {
        throw Error(ErrorKind::UnreadableFile, "script file " + path + " must hold a JSON array");
    }
    std::vector<ScriptStep> steps;
    for (const auto& item : doc) {
        if (item.is_string()) {
            steps.emplace_back(item.get<std::string>());
        } else if (item.is_object() && item.contains("error") && item["error"].is_string()) {
            try {
                steps.emplace_back(error_kind_from_string(item["error"].get<std::string>()));
            } catch (const std::invalid_argument& e) {
                throw Error(ErrorKind::UnreadableFile, e.what());
            }
        } else {
            throw Error(ErrorKind::UnreadableFile,
                        "script items must be strings or {\"error\": kind} objects");
        }
    }
    return std::make_unique<ScriptedBackend>(std::move(steps), std::move(model_name));
}

Completion ScriptedBackend::complete(const Conversation& conv)
{
    std::lock_guard lock(mutex_);
    received_.push_back(conv);
    if (script_.empty()) {
        throw Error(ErrorKind::ScriptExhausted,
                    "scripted backend received call " + std::to_string(received_.size()) +
                        " but the script is exhausted");
    }
    auto step = std::move(script_.front());
    script_.pop_front();
    if (auto* kind = std::get_if<ErrorKind>(&step)) {
        throw Error(*kind, "scripted failure");
    }
    return Completion{Message::assistant(std::get<std::string>(std::move(step))), {}};
}

std::size_t ScriptedBackend::calls() const
{
    std::lock_guard lock(mutex_);
    return received_.size();
}

std::size_t ScriptedBackend::remaining() const
{
    std::lock_guard lock(mutex_);
    return script_.size();
}

std::vector<Conversation> ScriptedBackend::received() const
{
    std::lock_guard lock(mutex_);
    return received_;
}

// ------------------------------------------------------------ rate limiter

RateLimiter::RateLimiter(double per_minute, double burst)
    : rate_per_second_(per_minute / 60.0), burst_(std::max(burst, 1.0)), tokens_(burst_), last_(Clock::now())
{
}

void RateLimiter::acquire()
{
    if (rate_per_second_ <= 0.0) {
        return;
    }
    std::chrono::duration<double> wait{0.0};
    {
        std::lock_guard lock(mutex_);
        auto now = Clock::now();
        std::chrono::duration<double> elapsed = now - last_;
        last_ = now;
        tokens_ = std::min(burst_, tokens_ + elapsed.count() * rate_per_second_);
        tokens_ -= 1.0;
        if (tokens_ < 0.0) {
            wait = std::chrono::duration<double>(-tokens_ / rate_per_second_);
        }
    }
    if (wait.count() > 0.0) {
        std::this_thread::sleep_for(wait);
    }
}

// -------------------------------------------------------------------- wire

nlohmann::json make_request_body(const BackendConfig& cfg, const Conversation& conv)
{
    auto messages = nlohmann::json::array();
    for (const auto& msg : conv) {
        messages.push_back({{"role", to_string(msg.role())}, {"content", msg.content()}});
    }
    return {{"model", cfg.model_name}, {"messages", std::move(messages)}, {"temperature", cfg.temperature}};
}

Completion parse_response_body(std::string_view body)
{
    auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw Error(ErrorKind::MalformedResponse, "response body is not a JSON object");
    }
    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty()) {
        throw Error(ErrorKind::MalformedResponse, "response has no choices");
    }
    const auto& first = (*choices)[0];
    if (!first.contains("message") || !first["message"].is_object()) {
        throw Error(ErrorKind::MalformedResponse, "first choice has no message");
    }
    const auto& message = first["message"];
    if (!message.contains("content") || !message["content"].is_string()) {
        throw Error(ErrorKind::MalformedResponse, "assistant message has no text content");
    }
    if (message.contains("role") && message["role"] != "assistant") {
        throw Error(ErrorKind::MalformedResponse, "first choice is not an assistant message");
    }

    auto reply = [&] {
        try {
            return Message::assistant(message["content"].get<std::string>());
        } catch (const Error&) {
            throw Error(ErrorKind::MalformedResponse, "assistant message is empty");
        }
    }();
    CompletionUsage usage;
    if (auto it = doc.find("usage"); it != doc.end() && it->is_object()) {
        auto count = [&](const char* field) -> std::uint64_t {
            auto v = it->find(field);
            if (v == it->end() || !v->is_number_integer() || v->get<std::int64_t>() < 0) {
                return 0;
            }
            return v->get<std::uint64_t>();
        };
        usage.prompt_tokens = count("prompt_tokens");
        usage.completion_tokens = count("completion_tokens");
    }
    return Completion{std::move(reply), usage};
}

ErrorKind classify_status(int status) noexcept
{
    if (status == 401 || status == 403) {
        return ErrorKind::AuthError;
    }
    if (status == 429) {
        return ErrorKind::RateLimited;
    }
    if (status >= 500) {
        return ErrorKind::ServerError;
    }
    return ErrorKind::RequestRejected;
}

std::string redact(std::string text, const ApiKey& key)
{
    const auto& secret = key.reveal();
    if (secret.empty()) {
        return text;
    }
    for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
        text.replace(pos, secret.size(), kRedacted);
        pos += kRedacted.size();
    }
    return text;
}

}  // namespace screenr
