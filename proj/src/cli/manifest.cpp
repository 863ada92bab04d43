#include "manifest.hpp"

#include "screenr/csv.hpp"
#include "screenr/engine.hpp"
#include "screenr/error.hpp"
#include "screenr/hash.hpp"

#include <cctype>
#include <fstream>

namespace screenr::cli {

void write_json(const std::filesystem::path& path, const nlohmann::json& doc)
{
    write_text(path, doc.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

void write_text(const std::filesystem::path& path, std::string_view text)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
    }
}

std::string file_digest(const std::filesystem::path& path)
{
    return sha256_hex(csv::read_file(path));
}

std::string safe_filename(std::string_view id)
{
    std::string out;
    bool changed = id.empty();
    for (char c : id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            out += c;
        } else {
            out += '_';
            changed = true;
        }
    }
    if (out.empty() || out.front() == '.') {
        out.insert(out.begin(), '_');
        changed = true;
    }
    if (changed) {
        out += "-" + sha256_hex(id).substr(0, 8);
    }
    return out;
}

nlohmann::json manifest_base(std::string_view command, const std::vector<std::string>& args)
{
    return {
        {"schema", kManifestSchema},
        {"screenr_version", kVersion},
        {"command", command},
        {"argv", args},
        {"started_at", format_timestamp(now_ms())},
    };
}

}  // namespace screenr::cli
