#include "screenr/engine.hpp"

#include "screenr/hash.hpp"

#include <cctype>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace screenr {

namespace {

bool is_word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

void require_inputs(std::string_view review_text, const Source& source)
{
    auto blank = [](std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; };
    if (blank(review_text)) {
        throw Error(ErrorKind::IncompleteDescription, "review description is empty");
    }
    if (blank(source.title) || blank(source.abstract)) {
        throw Error(ErrorKind::EmptyContent, "source " + source.id + " needs both a title and an abstract");
    }
}

class Session {
public:
    Session(Backend& backend, Method method, std::string_view review_text, const Source& source,
            const PromptTemplates& templates)
        : backend_(backend), templates_(templates)
    {
        result_.source_id = source.id;
        result_.method = method;
        result_.model_name = backend.model_name();
        result_.template_version = templates.version;
        result_.content_hash = content_hash(review_text, source, method, result_.model_name, templates.version);
        result_.started_at = now_ms();
    }

    void say(Role role, std::string text) { result_.transcript = std::move(result_.transcript).append({role, std::move(text)}); }

    const Message& ask()
    {
        auto completion = backend_.complete(result_.transcript);
        result_.usage += completion.usage;
        result_.transcript = std::move(result_.transcript).append(std::move(completion.message));
        return result_.transcript.messages().back();
    }

    // Parses the latest reply, allowing one corrective turn.
    ScreeningResult finish()
    {
        auto verdict = try_parse_verdict(result_.transcript.messages().back().content());
        if (!verdict) {
            say(Role::user, templates_.corrective);
            verdict = try_parse_verdict(ask().content());
        }
        if (verdict) {
            result_.verdict = verdict;
        } else {
            result_.failure = ScreeningFailure{ErrorKind::VerdictUnparseable,
                                               "no INCLUDE or EXCLUDE token after one corrective turn"};
        }
        result_.finished_at = now_ms();
        return std::move(result_);
    }

private:
    Backend& backend_;
    const PromptTemplates& templates_;
    ScreeningResult result_;
};

}  // namespace

std::string_view to_string(Method method) noexcept
{
    return method == Method::cot ? "cot" : "zeroshot";
}

std::optional<Method> method_from_string(std::string_view name) noexcept
{
    if (name == "cot") {
        return Method::cot;
    }
    if (name == "zeroshot") {
        return Method::zeroshot;
    }
    return std::nullopt;
}

std::optional<Verdict> try_parse_verdict(std::string_view text) noexcept
{
    std::optional<Verdict> last;
    constexpr std::size_t kTokenLen = 7;  // both tokens share this length
    for (std::size_t i = 0; i + kTokenLen <= text.size(); ++i) {
        auto candidate = text.substr(i, kTokenLen);
        std::optional<Verdict> hit;
        if (candidate == "INCLUDE") {
            hit = Verdict::include;
        } else if (candidate == "EXCLUDE") {
            hit = Verdict::exclude;
        } else {
            continue;
        }
        bool left_ok = i == 0 || !is_word_char(text[i - 1]);
        bool right_ok = i + kTokenLen == text.size() || !is_word_char(text[i + kTokenLen]);
        if (left_ok && right_ok) {
            last = hit;
        }
    }
    return last;
}

Verdict parse_verdict(std::string_view final_text)
{
    if (auto v = try_parse_verdict(final_text)) {
        return *v;
    }
    throw Error(ErrorKind::VerdictUnparseable, "response contains neither INCLUDE nor EXCLUDE");
}

Timestamp now_ms() noexcept
{
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string format_timestamp(Timestamp t)
{
    auto secs = std::chrono::time_point_cast<std::chrono::seconds>(t);
    auto ms = (t - secs).count();
    std::time_t tt = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

std::optional<Timestamp> parse_timestamp(std::string_view text)
{
    std::tm tm{};
    int ms = 0;
    std::istringstream is{std::string(text)};
    is >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    char dot = 0;
    char z = 0;
    if (!is || !(is >> dot) || dot != '.' || !(is >> ms) || !(is >> z) || z != 'Z') {
        return std::nullopt;
    }
    std::time_t secs = timegm(&tm);
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::from_time_t(secs)) +
           std::chrono::milliseconds(ms);
}

std::string content_hash(std::string_view review_text, const Source& source, Method method,
                         std::string_view model_name, std::string_view template_version)
{
    return hash_fields({review_text, source.title, source.abstract, to_string(method), model_name, template_version});
}

ScreeningResult screen_source_cot(Backend& backend, std::string_view review_text, const Source& source,
                                  const PromptTemplates& templates)
{
    require_inputs(review_text, source);
    Session s(backend, Method::cot, review_text, source, templates);
    s.say(Role::system, templates.cot_system);
    s.say(Role::user, render_template(templates.cot_criteria, {{"review_description", review_text}}));
    (void)s.ask();
    s.say(Role::user, render_template(templates.cot_assess, {{"title", source.title}, {"abstract", source.abstract}}));
    (void)s.ask();
    s.say(Role::user, templates.cot_final);
    (void)s.ask();
    return s.finish();
}

ScreeningResult screen_source_zeroshot(Backend& backend, std::string_view review_text, const Source& source,
                                       const PromptTemplates& templates)
{
    require_inputs(review_text, source);
    Session s(backend, Method::zeroshot, review_text, source, templates);
    s.say(Role::system, templates.zeroshot_system);
    s.say(Role::user, render_template(templates.zeroshot_user, {{"review_description", review_text},
                                                                {"title", source.title},
                                                                {"abstract", source.abstract}}));
    (void)s.ask();
    return s.finish();
}

ScreeningResult screen_source(Backend& backend, Method method, std::string_view review_text, const Source& source,
                              const PromptTemplates& templates)
{
    return method == Method::cot ? screen_source_cot(backend, review_text, source, templates)
                                 : screen_source_zeroshot(backend, review_text, source, templates);
}

}  // namespace screenr
