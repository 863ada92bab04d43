#pragma once

#include "screenr/verdict.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace screenr {

/**
 * Review objective and inclusion criteria in Population / Concept / Context
 * form. A non-empty `rendered_override` replaces the structured fields
 * entirely, for reviews described in some other format.
 */
struct ReviewDescription {
    std::string title;
    std::string objective;
    std::string population;
    std::string core_concept;
    std::string context;
    std::vector<std::string> extra_criteria;
    std::optional<std::string> rendered_override;
};

/// Prompt text for a review. Throws Error(IncompleteDescription).
[[nodiscard]] std::string build_review_description(const ReviewDescription& parts);

struct Source {
    std::string id;
    std::string title;
    std::string abstract;

    friend bool operator==(const Source&, const Source&) = default;
};

struct ColumnMapping {
    std::string id = "id";
    std::string title = "title";
    std::string abstract = "abstract";
};

enum class DropReason { missing_title, missing_abstract, duplicate, duplicate_id };

[[nodiscard]] std::string_view to_string(DropReason reason) noexcept;

struct DroppedRow {
    std::size_t row;  // 1-based data row, header excluded
    std::string id;
    DropReason reason;

    friend bool operator==(const DroppedRow&, const DroppedRow&) = default;
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::vector<DroppedRow> dropped;

    friend bool operator==(const IngestReport&, const IngestReport&) = default;
};

struct IngestResult {
    std::vector<Source> sources;
    IngestReport report;
};

/**
 * Reads sources from a CSV/TSV file with a header row. Rows missing a
 * title or abstract, and duplicates by normalized (title, abstract) or
 * by id, are dropped and listed in the report. Without an id column,
 * ids are synthesized as `row-<n>`.
 *
 * Throws Error(UnreadableFile) or Error(MissingColumn).
 */
[[nodiscard]] IngestResult ingest_sources(const std::filesystem::path& path, const ColumnMapping& mapping = {});

/// Lowercase with internal whitespace runs collapsed to one space and ends trimmed.
[[nodiscard]] std::string normalize_text(std::string_view text);

/// Uniform sample without replacement, in original order. Throws Error(SampleTooLarge).
[[nodiscard]] std::vector<Source> sample_sources(std::span<const Source> sources, std::size_t n, std::uint64_t seed);

struct ReviewerDecision {
    std::string reviewer;
    std::optional<Verdict> decision;  // empty cell = no decision recorded

    friend bool operator==(const ReviewerDecision&, const ReviewerDecision&) = default;
};

struct GoldLabel {
    std::string source_id;
    Verdict consensus;
    std::vector<ReviewerDecision> reviewer_decisions;
};

/**
 * Gold-standard labels: columns `id` and `consensus` (include/exclude,
 * any case) plus optional `reviewer_<name>` columns.
 * Throws Error(UnreadableFile), Error(MissingColumn), Error(InvalidLabel).
 */
[[nodiscard]] std::vector<GoldLabel> read_gold_labels(const std::filesystem::path& path,
                                                      std::string_view id_column = "id");

}  // namespace screenr
