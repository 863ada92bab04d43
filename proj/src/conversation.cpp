#include "screenr/conversation.hpp"

#include "screenr/error.hpp"

#include <algorithm>
#include <cctype>

namespace screenr {

namespace {

bool is_blank(std::string_view s)
{
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string_view header_for(Role role)
{
    switch (role) {
    case Role::system:
        return "SYSTEM:";
    case Role::user:
        return "USER:";
    case Role::assistant:
        return "ASSISTANT:";
    }
    return "";
}

std::optional<Role> parse_header(std::string_view line)
{
    if (line == "SYSTEM:") {
        return Role::system;
    }
    if (line == "USER:") {
        return Role::user;
    }
    if (line == "ASSISTANT:") {
        return Role::assistant;
    }
    return std::nullopt;
}

// A header line with zero or more leading backslashes.
bool needs_escape(std::string_view line)
{
    auto first = line.find_first_not_of('\\');
    if (first == std::string_view::npos) {
        return false;
    }
    return parse_header(line.substr(first)).has_value();
}

}  // namespace

std::string_view to_string(Role role) noexcept
{
    switch (role) {
    case Role::system:
        return "system";
    case Role::user:
        return "user";
    case Role::assistant:
        return "assistant";
    }
    return "";
}

std::optional<Role> role_from_string(std::string_view name) noexcept
{
    if (name == "system") {
        return Role::system;
    }
    if (name == "user") {
        return Role::user;
    }
    if (name == "assistant") {
        return Role::assistant;
    }
    return std::nullopt;
}

Message::Message(Role role, std::string content) : role_(role), content_(std::move(content))
{
    if (is_blank(content_)) {
        throw Error(ErrorKind::EmptyContent, "message content must not be blank");
    }
}

Conversation Conversation::append(Message msg) const&
{
    auto copy = messages_;
    copy.push_back(std::move(msg));
    return Conversation(std::move(copy));
}

Conversation Conversation::append(Message msg) &&
{
    messages_.push_back(std::move(msg));
    return Conversation(std::move(messages_));
}

std::optional<Message> last_assistant(const Conversation& conv)
{
    const auto& msgs = conv.messages();
    auto it = std::find_if(msgs.rbegin(), msgs.rend(),
                           [](const Message& m) { return m.role() == Role::assistant; });
    if (it == msgs.rend()) {
        return std::nullopt;
    }
    return *it;
}

std::string render_transcript(const Conversation& conv)
{
    std::string out;
    for (const auto& msg : conv) {
        out += header_for(msg.role());
        out += '\n';
        std::string_view content = msg.content();
        std::size_t pos = 0;
        while (true) {
            auto nl = content.find('\n', pos);
            auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
            if (needs_escape(line)) {
                out += '\\';
            }
            out += line;
            out += '\n';
            if (nl == std::string_view::npos) {
                break;
            }
            pos = nl + 1;
        }
    }
    return out;
}

Conversation parse_transcript(std::string_view text)
{
    if (text.empty()) {
        return {};
    }
    if (text.back() != '\n') {
        throw Error(ErrorKind::MalformedTranscript, "transcript must end with a newline");
    }
    text.remove_suffix(1);

    std::vector<Message> messages;
    std::optional<Role> role;
    std::string content;
    bool first_line = true;

    auto flush = [&] {
        if (role) {
            if (is_blank(content)) {
                throw Error(ErrorKind::MalformedTranscript, "message block without content");
            }
            messages.emplace_back(*role, std::move(content));
            content.clear();
        }
    };

    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (auto header = parse_header(line)) {
            flush();
            role = header;
            first_line = true;
        } else if (!role) {
            throw Error(ErrorKind::MalformedTranscript, "content before first role header");
        } else {
            if (!first_line) {
                content += '\n';
            }
            if (needs_escape(line)) {
                line.remove_prefix(1);
            }
            content += line;
            first_line = false;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    flush();
    return Conversation(std::move(messages));
}

}  // namespace screenr
