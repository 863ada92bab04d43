#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

namespace screenr {

[[nodiscard]] std::string sha256_hex(std::string_view data);

/// SHA-256 over length-prefixed fields, so field boundaries cannot collide.
[[nodiscard]] std::string hash_fields(std::initializer_list<std::string_view> fields);

}  // namespace screenr
