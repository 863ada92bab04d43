#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "screenr/backend.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <thread>

namespace screenr {

namespace {

struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

Endpoint split_base_url(const std::string& base_url)
{
    auto scheme_end = base_url.find("://");
    auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    Endpoint ep;
    ep.scheme_host_port = base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    ep.path = prefix + "/v1/chat/completions";
    return ep;
}

ErrorKind classify_transport(httplib::Error err)
{
    switch (err) {
    case httplib::Error::ConnectionTimeout:
    case httplib::Error::Read:
    case httplib::Error::Write:
        return ErrorKind::Timeout;
    default:
        return ErrorKind::NetworkError;
    }
}

// Short server-provided explanation, without echoing arbitrary bodies.
std::string server_message(const std::string& body)
{
    auto doc = nlohmann::json::parse(body, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("error")) {
        const auto& err = doc["error"];
        if (err.is_object() && err.contains("message") && err["message"].is_string()) {
            auto msg = err["message"].get<std::string>();
            return msg.size() > 300 ? msg.substr(0, 300) + "..." : msg;
        }
    }
    return {};
}

}  // namespace

LiveBackend::LiveBackend(BackendConfig cfg, std::shared_ptr<RateLimiter> limiter, Sleeper sleeper,
                         RetryPolicy retry, std::uint64_t jitter_seed)
    : cfg_(std::move(cfg)),
      limiter_(limiter ? std::move(limiter) : std::make_shared<RateLimiter>(cfg_.requests_per_minute)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      retry_(retry),
      rng_(jitter_seed != 0 ? jitter_seed : std::random_device{}())
{
    cfg_.validate();
}

Completion LiveBackend::complete(const Conversation& conv)
{
    if (conv.empty()) {
        throw Error(ErrorKind::RequestRejected, "cannot request a completion for an empty conversation");
    }
    for (int retry = 0;; ++retry) {
        limiter_->acquire();
        try {
            return attempt(conv);
        } catch (const Error& e) {
            if (!is_retryable(e.kind()) || retry >= cfg_.max_retries) {
                throw;
            }
            auto delay = backoff(retry);
            spdlog::warn("chat completion failed ({}); retry {}/{} in {} ms", to_string(e.kind()), retry + 1,
                         cfg_.max_retries, delay.count());
            sleeper_(delay);
        }
    }
}

std::chrono::milliseconds LiveBackend::backoff(int retry)
{
    double ceiling = static_cast<double>(retry_.base.count()) * std::pow(retry_.factor, retry);
    std::lock_guard lock(rng_mutex_);
    std::uniform_real_distribution<double> jitter(0.0, ceiling);
    return std::chrono::milliseconds(static_cast<std::int64_t>(jitter(rng_)));
}

Completion LiveBackend::attempt(const Conversation& conv)
{
    ++attempts_;

    const auto ep = split_base_url(cfg_.base_url);
    httplib::Client client(ep.scheme_host_port);
    auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(cfg_.request_timeout);
    auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.request_timeout - timeout_s);
    client.set_connection_timeout(timeout_s.count(), timeout_us.count());
    client.set_read_timeout(timeout_s.count(), timeout_us.count());
    client.set_write_timeout(timeout_s.count(), timeout_us.count());
    client.set_bearer_token_auth(cfg_.api_key.reveal());

    const auto body = make_request_body(cfg_, conv).dump();
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) {
        auto kind = classify_transport(res.error());
        throw Error(kind, redact("request to " + ep.scheme_host_port + ep.path +
                                     " failed: " + httplib::to_string(res.error()),
                                 cfg_.api_key));
    }
    if (res->status < 200 || res->status >= 300) {
        auto kind = classify_status(res->status);
        std::string msg = "HTTP " + std::to_string(res->status);
        if (auto detail = server_message(res->body); !detail.empty()) {
            msg += ": " + detail;
        }
        throw Error(kind, redact(std::move(msg), cfg_.api_key));
    }
    return parse_response_body(res->body);
}

}  // namespace screenr
