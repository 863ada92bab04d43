#include "screenr/csv.hpp"

#include "screenr/error.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace screenr::csv {

std::vector<Row> parse(std::string_view text, char delimiter)
{
    if (text.substr(0, 3) == "\xEF\xBB\xBF") {
        text.remove_prefix(3);
    }

    std::vector<Row> rows;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        // Skip lines that are completely empty.
        if (!(row.size() == 1 && row[0].empty())) {
            rows.push_back(std::move(row));
        }
        row.clear();
        row_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        row_started = true;
        if (c == '"' && field.empty()) {
            in_quotes = true;
        } else if (c == delimiter) {
            end_field();
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            // handled by the following '\n'
        } else if (c == '\n') {
            end_row();
        } else {
            field += c;
        }
    }
    if (in_quotes) {
        throw Error(ErrorKind::UnreadableFile, "unterminated quoted field");
    }
    if (row_started || !field.empty() || !row.empty()) {
        end_row();
    }
    return rows;
}

char detect_delimiter(const std::filesystem::path& path, std::string_view text)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".tsv" || ext == ".tab") {
        return '\t';
    }
    auto header = text.substr(0, text.find('\n'));
    if (header.find('\t') != std::string_view::npos && header.find(',') == std::string_view::npos) {
        return '\t';
    }
    return ',';
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw Error(ErrorKind::UnreadableFile, "error reading " + path.string());
    }
    return buf.str();
}

std::string escape(std::string_view field, char delimiter)
{
    bool quote = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) != std::string_view::npos;
    if (!quote) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string format_row(const Row& row, char delimiter)
{
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i != 0) {
            out += delimiter;
        }
        out += escape(row[i], delimiter);
    }
    out += '\n';
    return out;
}

Table::Table(std::vector<Row> rows)
{
    if (rows.empty()) {
        throw Error(ErrorKind::UnreadableFile, "table has no header row");
    }
    header_ = std::move(rows.front());
    for (auto& name : header_) {
        auto first = name.find_first_not_of(" \t");
        auto last = name.find_last_not_of(" \t");
        name = first == std::string::npos ? std::string{} : name.substr(first, last - first + 1);
    }
    rows_.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
}

Table Table::load(const std::filesystem::path& path)
{
    auto text = read_file(path);
    try {
        return Table(parse(text, detect_delimiter(path, text)));
    } catch (const Error& e) {
        throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
    }
}

std::size_t Table::column(std::string_view name) const noexcept
{
    auto it = std::find(header_.begin(), header_.end(), name);
    return it == header_.end() ? npos : static_cast<std::size_t>(it - header_.begin());
}

std::size_t Table::require(std::string_view name) const
{
    auto col = column(name);
    if (col == npos) {
        throw Error(ErrorKind::MissingColumn, "column '" + std::string(name) + "' not found in header");
    }
    return col;
}

std::string_view Table::cell(const Row& row, std::size_t col) noexcept
{
    return col < row.size() ? std::string_view(row[col]) : std::string_view{};
}

}  // namespace screenr::csv
