#pragma once

#include "screenr/backend.hpp"
#include "screenr/conversation.hpp"
#include "screenr/error.hpp"
#include "screenr/review.hpp"
#include "screenr/templates.hpp"
#include "screenr/verdict.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace screenr {

enum class Method { cot, zeroshot };

[[nodiscard]] std::string_view to_string(Method method) noexcept;
[[nodiscard]] std::optional<Method> method_from_string(std::string_view name) noexcept;

/**
 * Finds the uppercase tokens INCLUDE and EXCLUDE at word boundaries and
 * returns the verdict named by the last one. Lowercase or inflected forms
 * ("include", "INCLUDED") do not count.
 *
 * Throws Error(VerdictUnparseable) when neither token occurs.
 */
[[nodiscard]] Verdict parse_verdict(std::string_view final_text);

/// Non-throwing form of parse_verdict.
[[nodiscard]] std::optional<Verdict> try_parse_verdict(std::string_view final_text) noexcept;

using Timestamp = std::chrono::time_point<std::chrono::system_clock, std::chrono::milliseconds>;

[[nodiscard]] Timestamp now_ms() noexcept;
[[nodiscard]] std::string format_timestamp(Timestamp t);
/// Parses the format_timestamp output (UTC, millisecond precision).
[[nodiscard]] std::optional<Timestamp> parse_timestamp(std::string_view text);

struct ScreeningFailure {
    ErrorKind kind;
    std::string message;

    friend bool operator==(const ScreeningFailure&, const ScreeningFailure&) = default;
};

/**
 * Outcome of screening one source. Exactly one of `verdict` and `failure`
 * is set. On success the verdict was parsed from the transcript's final
 * assistant message.
 */
struct ScreeningResult {
    std::string source_id;
    Method method = Method::cot;
    std::string model_name;
    std::string template_version;
    std::optional<Verdict> verdict;
    std::optional<ScreeningFailure> failure;
    Conversation transcript;
    CompletionUsage usage;
    std::string content_hash;
    Timestamp started_at{};
    Timestamp finished_at{};

    [[nodiscard]] bool ok() const noexcept { return verdict.has_value(); }

    friend bool operator==(const ScreeningResult&, const ScreeningResult&) = default;
};

/// Hash of everything that determines a screening: review, source text, protocol, model and wording.
[[nodiscard]] std::string content_hash(std::string_view review_text, const Source& source, Method method,
                                       std::string_view model_name, std::string_view template_version);

/**
 * Chain-of-thought screening: the model first summarises the review's
 * inclusion criteria, then assesses the source against each criterion,
 * then gives a one-word recommendation (7 messages). An unparseable
 * recommendation gets one corrective turn (9 messages); if that also
 * fails the result carries a VerdictUnparseable failure.
 *
 * Backend errors propagate.
 */
[[nodiscard]] ScreeningResult screen_source_cot(Backend& backend, std::string_view review_text, const Source& source,
                                                const PromptTemplates& templates = PromptTemplates::builtin());

/// Single-prompt comparator protocol (3 messages, 5 with the corrective turn).
[[nodiscard]] ScreeningResult screen_source_zeroshot(Backend& backend, std::string_view review_text,
                                                     const Source& source,
                                                     const PromptTemplates& templates = PromptTemplates::builtin());

[[nodiscard]] ScreeningResult screen_source(Backend& backend, Method method, std::string_view review_text,
                                            const Source& source,
                                            const PromptTemplates& templates = PromptTemplates::builtin());

}  // namespace screenr
