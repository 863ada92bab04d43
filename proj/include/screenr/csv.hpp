#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace screenr::csv {

using Row = std::vector<std::string>;

/**
 * RFC 4180 reader: quoted fields may hold delimiters, doubled quotes and
 * line breaks. Accepts LF or CRLF endings and strips a UTF-8 BOM.
 * Throws Error(UnreadableFile) on an unterminated quote.
 */
[[nodiscard]] std::vector<Row> parse(std::string_view text, char delimiter);

/// Tab for .tsv/.tab files or a tab-only header line, comma otherwise.
[[nodiscard]] char detect_delimiter(const std::filesystem::path& path, std::string_view text);

/// Whole-file read. Throws Error(UnreadableFile).
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

[[nodiscard]] std::string escape(std::string_view field, char delimiter = ',');
[[nodiscard]] std::string format_row(const Row& row, char delimiter = ',');

/// Header-indexed view of a parsed table.
class Table {
public:
    Table(std::vector<Row> rows);

    [[nodiscard]] static Table load(const std::filesystem::path& path);

    [[nodiscard]] const Row& header() const noexcept { return header_; }
    [[nodiscard]] const std::vector<Row>& rows() const noexcept { return rows_; }

    /// Column index by exact name, or npos.
    [[nodiscard]] std::size_t column(std::string_view name) const noexcept;

    /// Throws Error(MissingColumn).
    [[nodiscard]] std::size_t require(std::string_view name) const;

    /// Field value; short rows read as empty.
    [[nodiscard]] static std::string_view cell(const Row& row, std::size_t col) noexcept;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    Row header_;
    std::vector<Row> rows_;
};

}  // namespace screenr::csv
