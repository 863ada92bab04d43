#include "screenr/error.hpp"

#include <array>
#include <utility>

namespace screenr {

namespace {

constexpr std::array<std::pair<ErrorKind, std::string_view>, 25> kNames{{
    {ErrorKind::EmptyContent, "EmptyContent"},
    {ErrorKind::MalformedTranscript, "MalformedTranscript"},
    {ErrorKind::MissingApiKey, "MissingApiKey"},
    {ErrorKind::AuthError, "AuthError"},
    {ErrorKind::RateLimited, "RateLimited"},
    {ErrorKind::ServerError, "ServerError"},
    {ErrorKind::Timeout, "Timeout"},
    {ErrorKind::NetworkError, "NetworkError"},
    {ErrorKind::MalformedResponse, "MalformedResponse"},
    {ErrorKind::RequestRejected, "RequestRejected"},
    {ErrorKind::ScriptExhausted, "ScriptExhausted"},
    {ErrorKind::IncompleteDescription, "IncompleteDescription"},
    {ErrorKind::UnreadableFile, "UnreadableFile"},
    {ErrorKind::MissingColumn, "MissingColumn"},
    {ErrorKind::InvalidLabel, "InvalidLabel"},
    {ErrorKind::SampleTooLarge, "SampleTooLarge"},
    {ErrorKind::DuplicateSource, "DuplicateSource"},
    {ErrorKind::VerdictUnparseable, "VerdictUnparseable"},
    {ErrorKind::CacheCorrupt, "CacheCorrupt"},
    {ErrorKind::UnlabelledSource, "UnlabelledSource"},
    {ErrorKind::EmptyMatrix, "EmptyMatrix"},
    {ErrorKind::LengthMismatch, "LengthMismatch"},
    {ErrorKind::EmptyInput, "EmptyInput"},
    {ErrorKind::SourceSetMismatch, "SourceSetMismatch"},
    {ErrorKind::Usage, "Usage"},
}};

}  // namespace

std::string_view to_string(ErrorKind kind) noexcept
{
    for (const auto& [k, name] : kNames) {
        if (k == kind) {
            return name;
        }
    }
    return "Unknown";
}

ErrorKind error_kind_from_string(std::string_view name)
{
    for (const auto& [k, n] : kNames) {
        if (n == name) {
            return k;
        }
    }
    throw std::invalid_argument("unknown error kind: " + std::string(name));
}

bool is_backend_error(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::MissingApiKey:
    case ErrorKind::AuthError:
    case ErrorKind::RateLimited:
    case ErrorKind::ServerError:
    case ErrorKind::Timeout:
    case ErrorKind::NetworkError:
    case ErrorKind::MalformedResponse:
    case ErrorKind::RequestRejected:
    case ErrorKind::ScriptExhausted:
        return true;
    default:
        return false;
    }
}

bool is_retryable(ErrorKind kind) noexcept
{
    return kind == ErrorKind::RateLimited || kind == ErrorKind::ServerError ||
           kind == ErrorKind::Timeout || kind == ErrorKind::NetworkError;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind)
{
}

}  // namespace screenr
