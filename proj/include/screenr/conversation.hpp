#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace screenr {

enum class Role { system, user, assistant };

[[nodiscard]] std::string_view to_string(Role role) noexcept;

/// Parses the lowercase wire name ("system", "user", "assistant").
[[nodiscard]] std::optional<Role> role_from_string(std::string_view name) noexcept;

/**
 * One chat turn. Content is never blank; construction throws
 * Error(EmptyContent) otherwise.
 */
class Message {
public:
    Message(Role role, std::string content);

    [[nodiscard]] static Message system(std::string content) { return {Role::system, std::move(content)}; }
    [[nodiscard]] static Message user(std::string content) { return {Role::user, std::move(content)}; }
    [[nodiscard]] static Message assistant(std::string content) { return {Role::assistant, std::move(content)}; }

    [[nodiscard]] Role role() const noexcept { return role_; }
    [[nodiscard]] const std::string& content() const noexcept { return content_; }

    friend bool operator==(const Message&, const Message&) = default;

private:
    Role role_;
    std::string content_;
};

/**
 * Ordered transcript of messages. Values are immutable once built:
 * `append` returns a new conversation and leaves the receiver untouched.
 */
class Conversation {
public:
    Conversation() = default;
    explicit Conversation(std::vector<Message> messages) : messages_(std::move(messages)) {}

    [[nodiscard]] Conversation append(Message msg) const&;
    [[nodiscard]] Conversation append(Message msg) &&;

    [[nodiscard]] const std::vector<Message>& messages() const noexcept { return messages_; }
    [[nodiscard]] std::size_t size() const noexcept { return messages_.size(); }
    [[nodiscard]] bool empty() const noexcept { return messages_.empty(); }
    [[nodiscard]] const Message& operator[](std::size_t i) const { return messages_.at(i); }

    auto begin() const noexcept { return messages_.begin(); }
    auto end() const noexcept { return messages_.end(); }

    friend bool operator==(const Conversation&, const Conversation&) = default;

private:
    std::vector<Message> messages_;
};

/// Final assistant message, if any.
[[nodiscard]] std::optional<Message> last_assistant(const Conversation& conv);

/**
 * Renders one block per message: an uppercase `ROLE:` header line followed
 * by the content and a newline. Content lines that would read as a header
 * (optionally preceded by backslashes) gain one leading backslash.
 */
[[nodiscard]] std::string render_transcript(const Conversation& conv);

/// Inverse of render_transcript. Throws Error(MalformedTranscript).
[[nodiscard]] Conversation parse_transcript(std::string_view text);

}  // namespace screenr
