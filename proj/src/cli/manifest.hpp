#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace screenr::cli {

inline constexpr std::string_view kManifestSchema = "screenr.manifest/1";
inline constexpr std::string_view kVersion = "0.1.0";

/// Writes `doc` pretty-printed, creating parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

void write_text(const std::filesystem::path& path, std::string_view text);

/// SHA-256 of a file's bytes, for recording inputs in manifests.
[[nodiscard]] std::string file_digest(const std::filesystem::path& path);

/// File name for a source id: unsafe characters replaced, plus a short hash when anything changed.
[[nodiscard]] std::string safe_filename(std::string_view id);

/// Manifest skeleton shared by every run-producing subcommand.
[[nodiscard]] nlohmann::json manifest_base(std::string_view command, const std::vector<std::string>& args);

}  // namespace screenr::cli
