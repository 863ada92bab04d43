#include "screenr/templates.hpp"

#include "screenr/csv.hpp"
#include "screenr/error.hpp"

namespace screenr {

namespace detail {
// Generated from templates/v1 at configure time.
PromptTemplates make_builtin_templates();
}  // namespace detail

namespace {

std::string strip_final_newline(std::string text)
{
    if (!text.empty() && text.back() == '\n') {
        text.pop_back();
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
    }
    return text;
}

}  // namespace

const PromptTemplates& PromptTemplates::builtin()
{
    static const PromptTemplates templates = [] {
        auto t = detail::make_builtin_templates();
        for (auto* field : {&t.version, &t.cot_system, &t.cot_criteria, &t.cot_assess, &t.cot_final,
                            &t.corrective, &t.zeroshot_system, &t.zeroshot_user}) {
            *field = strip_final_newline(std::move(*field));
        }
        return t;
    }();
    return templates;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir)
{
    auto read = [&](const char* name) { return strip_final_newline(csv::read_file(dir / name)); };
    PromptTemplates t;
    t.version = read("VERSION");
    t.cot_system = read("cot_system.txt");
    t.cot_criteria = read("cot_criteria.txt");
    t.cot_assess = read("cot_assess.txt");
    t.cot_final = read("cot_final.txt");
    t.corrective = read("corrective.txt");
    t.zeroshot_system = read("zeroshot_system.txt");
    t.zeroshot_user = read("zeroshot_user.txt");
    if (t.version.empty()) {
        throw Error(ErrorKind::UnreadableFile, (dir / "VERSION").string() + " is empty");
    }
    return t;
}

std::string render_template(std::string_view tpl, TemplateVars vars)
{
    std::string out;
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        auto open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out += tpl.substr(pos);
            break;
        }
        auto close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out += tpl.substr(pos);
            break;
        }
        out += tpl.substr(pos, open - pos);
        auto name = tpl.substr(open + 2, close - open - 2);
        bool found = false;
        for (const auto& [key, value] : vars) {
            if (key == name) {
                out += value;
                found = true;
                break;
            }
        }
        if (!found) {
            throw Error(ErrorKind::UnreadableFile, "unknown template placeholder {{" + std::string(name) + "}}");
        }
        pos = close + 2;
    }
    return out;
}

}  // namespace screenr
