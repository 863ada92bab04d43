#pragma once

#include "screenr/review.hpp"
#include "screenr/verdict.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace screenr {

/// Counts with include as the positive class, scored against the gold standard.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    [[nodiscard]] std::uint64_t n() const noexcept { return tp + fp + tn + fn; }

    void add(Verdict predicted, Verdict gold) noexcept;

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept
    {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Undefined ratios (zero denominator) are empty, never 0.
struct Rates {
    double accuracy = 0.0;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
};

/// Throws Error(UnlabelledSource) if a verdict has no gold label.
[[nodiscard]] ConfusionMatrix confusion(const std::map<std::string, Verdict>& verdicts,
                                        const std::map<std::string, Verdict>& gold);

/// Throws Error(EmptyMatrix) when n == 0.
[[nodiscard]] Rates stats(const ConfusionMatrix& m);

/**
 * Unweighted two-category Cohen's kappa, (p_o - p_e) / (1 - p_e).
 * Two raters who both use a single identical category throughout get 1.
 *
 * Throws Error(LengthMismatch) or Error(EmptyInput).
 */
[[nodiscard]] double cohen_kappa(std::span<const Verdict> a, std::span<const Verdict> b);

struct HumanAgreement {
    double kappa;
    std::uint64_t n;  // mean number of items both reviewers of a pair rated
};

/**
 * Mean pairwise kappa between individual reviewers, over items where both
 * reviewers in a pair recorded a decision. Empty without at least one
 * pair sharing an item.
 */
[[nodiscard]] std::optional<HumanAgreement> human_agreement(std::span<const GoldLabel> labels);

struct ReviewScore {
    std::string review_name;
    ConfusionMatrix matrix;
    Rates rates;
    std::optional<double> kappa_model_vs_gold;
    std::optional<HumanAgreement> kappa_human_vs_human;
    std::uint64_t parse_failures = 0;
};

/**
 * Scores one review's verdicts. Ids listed in `failed_ids` are screening
 * failures: they are counted, not scored. Gold labels without a verdict
 * are ignored (screening may cover a sample).
 */
[[nodiscard]] ReviewScore score_review(std::string review_name, const std::map<std::string, Verdict>& verdicts,
                                       std::span<const GoldLabel> gold, std::uint64_t parse_failures = 0);

/**
 * Weighted means over reviews where the statistic is defined, each review
 * weighted by that statistic's denominator (n for accuracy and both
 * kappas, tp+fn for sensitivity, tn+fp for specificity). These equal the
 * pooled matrix's rates.
 */
struct AggregateScore {
    ConfusionMatrix pooled;
    Rates pooled_rates;
    std::optional<double> accuracy;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> kappa_model_vs_gold;
    std::optional<double> kappa_human_vs_human;
    std::uint64_t parse_failures = 0;
};

/// Throws Error(EmptyInput) for no reviews.
[[nodiscard]] AggregateScore aggregate(std::span<const ReviewScore> scores);

inline constexpr std::string_view kReportSchema = "screenr.metrics/1";
inline constexpr std::string_view kComparisonSchema = "screenr.comparison/1";

struct Report {
    std::string text;
    nlohmann::json machine;
};

/// Fixed-point rendering used by the text tables; "—" for undefined.
[[nodiscard]] std::string format_stat(std::optional<double> value);

[[nodiscard]] Report report(std::span<const ReviewScore> scores, const AggregateScore& agg);

struct MethodScores {
    std::string method;
    std::vector<ReviewScore> reviews;
    AggregateScore aggregate;
};

/// Side-by-side per-review statistics for two methods on the same reviews.
[[nodiscard]] Report compare_report(const MethodScores& left, const MethodScores& right);

}  // namespace screenr
