#include "screenr/review.hpp"

#include "screenr/csv.hpp"
#include "screenr/error.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>
#include <unordered_set>

namespace screenr {

namespace {

std::string trim(std::string_view s)
{
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

bool blank(std::string_view s)
{
    return trim(s).empty();
}

}  // namespace

std::optional<Verdict> verdict_from_string(std::string_view text) noexcept
{
    auto t = trim(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "include") {
        return Verdict::include;
    }
    if (t == "exclude") {
        return Verdict::exclude;
    }
    return std::nullopt;
}

std::string build_review_description(const ReviewDescription& parts)
{
    if (parts.rendered_override && !blank(*parts.rendered_override)) {
        return *parts.rendered_override;
    }
    if (blank(parts.objective) || blank(parts.population) || blank(parts.core_concept) || blank(parts.context)) {
        throw Error(ErrorKind::IncompleteDescription,
                    "objective, population, concept and context are all required "
                    "unless a free-text description is given");
    }

    std::string out;
    if (!blank(parts.title)) {
        out += "Title: " + trim(parts.title) + "\n\n";
    }
    out += "Objective: " + trim(parts.objective) + "\n\n";
    out += "Population: " + trim(parts.population) + "\n\n";
    out += "Concept: " + trim(parts.core_concept) + "\n\n";
    out += "Context: " + trim(parts.context) + "\n";

    std::vector<std::string> extra;
    for (const auto& c : parts.extra_criteria) {
        if (!blank(c)) {
            extra.push_back(trim(c));
        }
    }
    if (!extra.empty()) {
        out += "\nAdditional criteria:\n";
        for (const auto& c : extra) {
            out += "- " + c + "\n";
        }
    }
    return out;
}

std::string_view to_string(DropReason reason) noexcept
{
    switch (reason) {
    case DropReason::missing_title:
        return "missing title";
    case DropReason::missing_abstract:
        return "missing abstract";
    case DropReason::duplicate:
        return "duplicate";
    case DropReason::duplicate_id:
        return "duplicate id";
    }
    return "";
}

std::string normalize_text(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

IngestResult ingest_sources(const std::filesystem::path& path, const ColumnMapping& mapping)
{
    auto table = csv::Table::load(path);
    const auto title_col = table.require(mapping.title);
    const auto abstract_col = table.require(mapping.abstract);
    const auto id_col = table.column(mapping.id);

    IngestResult result;
    std::set<std::pair<std::string, std::string>> seen_content;
    std::unordered_set<std::string> seen_ids;

    for (std::size_t i = 0; i < table.rows().size(); ++i) {
        const auto& row = table.rows()[i];
        const auto row_no = i + 1;
        ++result.report.rows_read;

        std::string id = id_col == csv::Table::npos ? "" : trim(csv::Table::cell(row, id_col));
        if (id.empty()) {
            id = "row-" + std::to_string(row_no);
        }
        auto title = trim(csv::Table::cell(row, title_col));
        auto abstract = trim(csv::Table::cell(row, abstract_col));

        auto drop = [&](DropReason reason) { result.report.dropped.push_back({row_no, id, reason}); };
        if (title.empty()) {
            drop(DropReason::missing_title);
            continue;
        }
        if (abstract.empty()) {
            drop(DropReason::missing_abstract);
            continue;
        }
        if (!seen_content.emplace(normalize_text(title), normalize_text(abstract)).second) {
            drop(DropReason::duplicate);
            continue;
        }
        if (!seen_ids.insert(id).second) {
            drop(DropReason::duplicate_id);
            continue;
        }
        result.sources.push_back({std::move(id), std::move(title), std::move(abstract)});
    }
    return result;
}

std::vector<Source> sample_sources(std::span<const Source> sources, std::size_t n, std::uint64_t seed)
{
    if (n > sources.size()) {
        throw Error(ErrorKind::SampleTooLarge, "cannot sample " + std::to_string(n) + " of " +
                                                   std::to_string(sources.size()) + " sources");
    }
    // Selection sampling over indices keeps the original order.
    std::mt19937_64 rng(seed);
    std::vector<Source> out;
    out.reserve(n);
    std::size_t needed = n;
    for (std::size_t i = 0; i < sources.size() && needed > 0; ++i) {
        const auto left = sources.size() - i;
        std::uniform_int_distribution<std::size_t> pick(0, left - 1);
        if (pick(rng) < needed) {
            out.push_back(sources[i]);
            --needed;
        }
    }
    return out;
}

std::vector<GoldLabel> read_gold_labels(const std::filesystem::path& path, std::string_view id_column)
{
    auto table = csv::Table::load(path);
    const auto id_col = table.require(id_column);
    const auto consensus_col = table.require("consensus");

    std::vector<std::pair<std::string, std::size_t>> reviewers;
    constexpr std::string_view prefix = "reviewer_";
    for (std::size_t c = 0; c < table.header().size(); ++c) {
        const auto& name = table.header()[c];
        if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0) {
            reviewers.emplace_back(name.substr(prefix.size()), c);
        }
    }

    std::vector<GoldLabel> labels;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < table.rows().size(); ++i) {
        const auto& row = table.rows()[i];
        auto where = path.string() + " row " + std::to_string(i + 1);
        auto id = trim(csv::Table::cell(row, id_col));
        if (id.empty()) {
            throw Error(ErrorKind::InvalidLabel, where + ": empty id");
        }
        if (!seen.insert(id).second) {
            throw Error(ErrorKind::InvalidLabel, where + ": duplicate id " + id);
        }
        auto consensus = verdict_from_string(csv::Table::cell(row, consensus_col));
        if (!consensus) {
            throw Error(ErrorKind::InvalidLabel, where + ": consensus must be include or exclude");
        }
        GoldLabel label{id, *consensus, {}};
        for (const auto& [name, col] : reviewers) {
            auto cell = csv::Table::cell(row, col);
            std::optional<Verdict> decision;
            if (!blank(cell)) {
                decision = verdict_from_string(cell);
                if (!decision) {
                    throw Error(ErrorKind::InvalidLabel, where + ": reviewer_" + name + " must be include or exclude");
                }
            }
            label.reviewer_decisions.push_back({name, decision});
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

}  // namespace screenr
