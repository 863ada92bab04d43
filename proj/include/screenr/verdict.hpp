#pragma once

#include <optional>
#include <string_view>

namespace screenr {

/// A screening decision. `include` is the positive class everywhere.
enum class Verdict { include, exclude };

[[nodiscard]] constexpr std::string_view to_string(Verdict v) noexcept
{
    return v == Verdict::include ? "include" : "exclude";
}

/// Accepts "include"/"exclude" in any letter case, ignoring surrounding whitespace.
[[nodiscard]] std::optional<Verdict> verdict_from_string(std::string_view text) noexcept;

}  // namespace screenr
