#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>

namespace screenr {

/**
 * Prompt wording for both screening protocols. The version string is part
 * of every content hash, so editing wording without bumping it would let
 * stale cache records satisfy new runs.
 *
 * Placeholders: {{review_description}}, {{title}}, {{abstract}}.
 */
struct PromptTemplates {
    std::string version;
    std::string cot_system;
    std::string cot_criteria;
    std::string cot_assess;
    std::string cot_final;
    std::string corrective;
    std::string zeroshot_system;
    std::string zeroshot_user;

    /// The templates compiled into the library from templates/v1.
    [[nodiscard]] static const PromptTemplates& builtin();

    /// Reads VERSION and <name>.txt files from `dir`. Throws Error(UnreadableFile).
    [[nodiscard]] static PromptTemplates load(const std::filesystem::path& dir);
};

using TemplateVars = std::initializer_list<std::pair<std::string_view, std::string_view>>;

/**
 * Single-pass substitution of {{name}} placeholders. Substituted values
 * are never rescanned. Unknown placeholders throw Error(UnreadableFile).
 */
[[nodiscard]] std::string render_template(std::string_view tpl, TemplateVars vars);

}  // namespace screenr
