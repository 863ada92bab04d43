#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace screenr {

enum class ErrorKind {
    // conversation
    EmptyContent,
    MalformedTranscript,
    // backend
    MissingApiKey,
    AuthError,
    RateLimited,
    ServerError,
    Timeout,
    NetworkError,
    MalformedResponse,
    RequestRejected,
    ScriptExhausted,
    // review
    IncompleteDescription,
    UnreadableFile,
    MissingColumn,
    InvalidLabel,
    SampleTooLarge,
    DuplicateSource,
    // engine
    VerdictUnparseable,
    // batch
    CacheCorrupt,
    // metrics
    UnlabelledSource,
    EmptyMatrix,
    LengthMismatch,
    EmptyInput,
    SourceSetMismatch,
    // cli
    Usage,
};

[[nodiscard]] std::string_view to_string(ErrorKind kind) noexcept;

/// Returns the kind named by `name`, or throws std::invalid_argument.
[[nodiscard]] ErrorKind error_kind_from_string(std::string_view name);

/// True for errors raised while talking to a model backend.
[[nodiscard]] bool is_backend_error(ErrorKind kind) noexcept;

/// Backend errors worth another attempt after a backoff.
[[nodiscard]] bool is_retryable(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace screenr
