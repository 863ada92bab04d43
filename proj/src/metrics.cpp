#include "screenr/metrics.hpp"

#include "screenr/error.hpp"

#include <array>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace screenr {

using nlohmann::json;

void ConfusionMatrix::add(Verdict predicted, Verdict gold) noexcept
{
    if (gold == Verdict::include) {
        ++(predicted == Verdict::include ? tp : fn);
    } else {
        ++(predicted == Verdict::include ? fp : tn);
    }
}

ConfusionMatrix confusion(const std::map<std::string, Verdict>& verdicts, const std::map<std::string, Verdict>& gold)
{
    ConfusionMatrix m;
    for (const auto& [id, verdict] : verdicts) {
        auto it = gold.find(id);
        if (it == gold.end()) {
            throw Error(ErrorKind::UnlabelledSource, "no gold label for source " + id);
        }
        m.add(verdict, it->second);
    }
    return m;
}

Rates stats(const ConfusionMatrix& m)
{
    if (m.n() == 0) {
        throw Error(ErrorKind::EmptyMatrix, "confusion matrix is empty");
    }
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0) {
            return std::nullopt;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    return Rates{*ratio(m.tp + m.tn, m.n()), ratio(m.tp, m.tp + m.fn), ratio(m.tn, m.tn + m.fp)};
}

double cohen_kappa(std::span<const Verdict> a, std::span<const Verdict> b)
{
    if (a.size() != b.size()) {
        throw Error(ErrorKind::LengthMismatch, "raters scored " + std::to_string(a.size()) + " and " +
                                                   std::to_string(b.size()) + " items");
    }
    if (a.empty()) {
        throw Error(ErrorKind::EmptyInput, "no items to compare");
    }
    std::uint64_t agree = 0;
    std::uint64_t a_inc = 0;
    std::uint64_t b_inc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        agree += a[i] == b[i];
        a_inc += a[i] == Verdict::include;
        b_inc += b[i] == Verdict::include;
    }
    const auto n = static_cast<double>(a.size());
    const double p_o = static_cast<double>(agree) / n;
    const double pa = static_cast<double>(a_inc) / n;
    const double pb = static_cast<double>(b_inc) / n;
    const double p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (p_e >= 1.0) {
        return 1.0;
    }
    return (p_o - p_e) / (1.0 - p_e);
}

std::optional<HumanAgreement> human_agreement(std::span<const GoldLabel> labels)
{
    if (labels.empty()) {
        return std::nullopt;
    }
    const auto reviewers = labels.front().reviewer_decisions.size();
    std::uint64_t total = 0;
    std::size_t pairs = 0;
    double kappa_sum = 0.0;
    for (std::size_t r1 = 0; r1 < reviewers; ++r1) {
        for (std::size_t r2 = r1 + 1; r2 < reviewers; ++r2) {
            std::vector<Verdict> a;
            std::vector<Verdict> b;
            for (const auto& label : labels) {
                const auto& d1 = label.reviewer_decisions.at(r1).decision;
                const auto& d2 = label.reviewer_decisions.at(r2).decision;
                if (d1 && d2) {
                    a.push_back(*d1);
                    b.push_back(*d2);
                }
            }
            if (a.empty()) {
                continue;
            }
            const double k = cohen_kappa(a, b);
            kappa_sum += k;
            total += a.size();
            ++pairs;
        }
    }
    if (pairs == 0) {
        return std::nullopt;
    }
    return HumanAgreement{kappa_sum / static_cast<double>(pairs), total / pairs};
}

ReviewScore score_review(std::string review_name, const std::map<std::string, Verdict>& verdicts,
                         std::span<const GoldLabel> gold, std::uint64_t parse_failures)
{
    std::map<std::string, Verdict> consensus;
    std::vector<GoldLabel> screened;
    for (const auto& label : gold) {
        consensus.emplace(label.source_id, label.consensus);
        if (verdicts.contains(label.source_id)) {
            screened.push_back(label);
        }
    }

    ReviewScore score;
    score.review_name = std::move(review_name);
    score.matrix = confusion(verdicts, consensus);
    score.parse_failures = parse_failures;
    if (score.matrix.n() > 0) {
        score.rates = stats(score.matrix);
        std::vector<Verdict> model;
        std::vector<Verdict> human;
        for (const auto& [id, v] : verdicts) {
            model.push_back(v);
            human.push_back(consensus.at(id));
        }
        score.kappa_model_vs_gold = cohen_kappa(model, human);
    }
    score.kappa_human_vs_human = human_agreement(screened);
    return score;
}

AggregateScore aggregate(std::span<const ReviewScore> scores)
{
    if (scores.empty()) {
        throw Error(ErrorKind::EmptyInput, "no reviews to aggregate");
    }

    struct WeightedMean {
        double sum = 0.0;
        double weight = 0.0;
        void add(std::optional<double> value, std::uint64_t w)
        {
            if (value && w > 0) {
                sum += *value * static_cast<double>(w);
                weight += static_cast<double>(w);
            }
        }
        [[nodiscard]] std::optional<double> get() const
        {
            return weight > 0.0 ? std::optional<double>(sum / weight) : std::nullopt;
        }
    };

    AggregateScore agg;
    WeightedMean acc, sens, spec, k_model, k_human;
    for (const auto& s : scores) {
        const auto& m = s.matrix;
        agg.pooled += m;
        agg.parse_failures += s.parse_failures;
        if (m.n() == 0) {
            continue;
        }
        acc.add(s.rates.accuracy, m.n());
        sens.add(s.rates.sensitivity, m.tp + m.fn);
        spec.add(s.rates.specificity, m.tn + m.fp);
        k_model.add(s.kappa_model_vs_gold, m.n());
        if (s.kappa_human_vs_human) {
            k_human.add(s.kappa_human_vs_human->kappa, s.kappa_human_vs_human->n);
        }
    }
    if (agg.pooled.n() > 0) {
        agg.pooled_rates = stats(agg.pooled);
    }
    agg.accuracy = acc.get();
    agg.sensitivity = sens.get();
    agg.specificity = spec.get();
    agg.kappa_model_vs_gold = k_model.get();
    agg.kappa_human_vs_human = k_human.get();
    return agg;
}

std::string format_stat(std::optional<double> value)
{
    if (!value) {
        return "—";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *value);
    return buf;
}

namespace {

// Keys for undefined values are omitted rather than written as null.
void put(json& j, const char* key, std::optional<double> v)
{
    if (v) {
        j[key] = *v;
    }
}

json matrix_json(const ConfusionMatrix& m)
{
    return {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}, {"n", m.n()}};
}

json review_json(const ReviewScore& s)
{
    json j{{"review", s.review_name}, {"matrix", matrix_json(s.matrix)}, {"parse_failures", s.parse_failures}};
    if (s.matrix.n() > 0) {
        put(j, "accuracy", s.rates.accuracy);
        put(j, "sensitivity", s.rates.sensitivity);
        put(j, "specificity", s.rates.specificity);
    }
    put(j, "kappa_model_vs_gold", s.kappa_model_vs_gold);
    if (s.kappa_human_vs_human) {
        j["kappa_human_vs_human"] = s.kappa_human_vs_human->kappa;
        j["human_pairs_n"] = s.kappa_human_vs_human->n;
    }
    return j;
}

json aggregate_json(const AggregateScore& a)
{
    json weighted = json::object();
    put(weighted, "accuracy", a.accuracy);
    put(weighted, "sensitivity", a.sensitivity);
    put(weighted, "specificity", a.specificity);
    put(weighted, "kappa_model_vs_gold", a.kappa_model_vs_gold);
    put(weighted, "kappa_human_vs_human", a.kappa_human_vs_human);
    json pooled{{"matrix", matrix_json(a.pooled)}};
    if (a.pooled.n() > 0) {
        put(pooled, "accuracy", a.pooled_rates.accuracy);
        put(pooled, "sensitivity", a.pooled_rates.sensitivity);
        put(pooled, "specificity", a.pooled_rates.specificity);
    }
    return {{"weighted", weighted}, {"pooled", pooled}, {"parse_failures", a.parse_failures}};
}

std::optional<double> defined_accuracy(const ReviewScore& s)
{
    return s.matrix.n() > 0 ? std::optional<double>(s.rates.accuracy) : std::nullopt;
}

std::optional<double> human_kappa(const ReviewScore& s)
{
    return s.kappa_human_vs_human ? std::optional<double>(s.kappa_human_vs_human->kappa) : std::nullopt;
}

std::string pad(const std::string& s, std::size_t width)
{
    // "—" is three bytes but one column wide.
    std::size_t columns = 0;
    for (unsigned char c : s) {
        columns += (c & 0xC0) != 0x80;
    }
    return columns >= width ? s : std::string(width - columns, ' ') + s;
}

std::string left(const std::string& s, std::size_t width)
{
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

Report report(std::span<const ReviewScore> scores, const AggregateScore& agg)
{
    std::size_t name_w = 9;
    for (const auto& s : scores) {
        name_w = std::max(name_w, s.review_name.size());
    }
    std::ostringstream os;
    os << left("review", name_w) << pad("n", 6) << pad("tp", 6) << pad("fp", 6) << pad("tn", 6) << pad("fn", 6)
       << pad("accuracy", 10) << pad("sens", 8) << pad("spec", 8) << pad("k_model", 9) << pad("k_human", 9)
       << pad("failed", 8) << '\n';
    auto row = [&](const std::string& name, const ConfusionMatrix& m, std::optional<double> a, std::optional<double> se,
                   std::optional<double> sp, std::optional<double> km, std::optional<double> kh, std::uint64_t failed) {
        os << left(name, name_w) << pad(std::to_string(m.n()), 6) << pad(std::to_string(m.tp), 6)
           << pad(std::to_string(m.fp), 6) << pad(std::to_string(m.tn), 6) << pad(std::to_string(m.fn), 6)
           << pad(format_stat(a), 10) << pad(format_stat(se), 8) << pad(format_stat(sp), 8) << pad(format_stat(km), 9)
           << pad(format_stat(kh), 9) << pad(std::to_string(failed), 8) << '\n';
    };
    json reviews = json::array();
    for (const auto& s : scores) {
        row(s.review_name, s.matrix, defined_accuracy(s), s.rates.sensitivity, s.rates.specificity,
            s.kappa_model_vs_gold, human_kappa(s), s.parse_failures);
        reviews.push_back(review_json(s));
    }
    row("aggregate", agg.pooled, agg.accuracy, agg.sensitivity, agg.specificity, agg.kappa_model_vs_gold,
        agg.kappa_human_vs_human, agg.parse_failures);
    os << "\naggregate rows are denominator-weighted means (equal to pooled-matrix rates); "
          "k_human is mean pairwise inter-rater kappa\n";

    return Report{os.str(), json{{"schema", kReportSchema}, {"reviews", reviews}, {"aggregate", aggregate_json(agg)}}};
}

Report compare_report(const MethodScores& lhs, const MethodScores& rhs)
{
    if (lhs.reviews.size() != rhs.reviews.size()) {
        throw Error(ErrorKind::SourceSetMismatch, "methods cover different numbers of reviews");
    }
    std::size_t name_w = 9;
    for (const auto& s : lhs.reviews) {
        name_w = std::max(name_w, s.review_name.size());
    }
    const auto& a = lhs.method;
    const auto& b = rhs.method;
    std::ostringstream os;
    os << left("review", name_w) << pad("n", 6);
    for (const char* stat : {"acc", "sens", "spec", "k_model"}) {
        os << pad(std::string(stat) + "[" + a + "]", 16) << pad(std::string(stat) + "[" + b + "]", 16);
    }
    os << '\n';
    auto row = [&](const std::string& name, std::uint64_t n, std::array<std::optional<double>, 4> x,
                   std::array<std::optional<double>, 4> y) {
        os << left(name, name_w) << pad(std::to_string(n), 6);
        for (std::size_t i = 0; i < 4; ++i) {
            os << pad(format_stat(x[i]), 16) << pad(format_stat(y[i]), 16);
        }
        os << '\n';
    };

    json rows = json::array();
    for (std::size_t i = 0; i < lhs.reviews.size(); ++i) {
        const auto& x = lhs.reviews[i];
        const auto& y = rhs.reviews[i];
        row(x.review_name, x.matrix.n(),
            {defined_accuracy(x), x.rates.sensitivity, x.rates.specificity, x.kappa_model_vs_gold},
            {defined_accuracy(y), y.rates.sensitivity, y.rates.specificity, y.kappa_model_vs_gold});
        rows.push_back({{"review", x.review_name}, {a, review_json(x)}, {b, review_json(y)}});
    }
    row("aggregate", lhs.aggregate.pooled.n(),
        {lhs.aggregate.accuracy, lhs.aggregate.sensitivity, lhs.aggregate.specificity, lhs.aggregate.kappa_model_vs_gold},
        {rhs.aggregate.accuracy, rhs.aggregate.sensitivity, rhs.aggregate.specificity, rhs.aggregate.kappa_model_vs_gold});

    return Report{os.str(), json{{"schema", kComparisonSchema},
                                 {"methods", {a, b}},
                                 {"reviews", rows},
                                 {"aggregate", {{a, aggregate_json(lhs.aggregate)}, {b, aggregate_json(rhs.aggregate)}}}}};
}

}  // namespace screenr
