#pragma once

#include "slnscreen/category.hpp"
#include "slnscreen/corpus.hpp"
#include "slnscreen/prediction.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace slns::eval {

// Exact non-negative rational. A zero denominator means "not computable".
struct Ratio {
    std::uint64_t numerator = 0;
    std::uint64_t denominator = 0;

    bool computable() const noexcept { return denominator != 0; }
    Ratio reduced() const;

    // 100 * n / d rounded half-up to hundredths; throws when not computable.
    std::int64_t hundredths() const;
    double percent() const;

    // "92.19", or "not computable".
    std::string rendered() const;
    // "59/64", or "0/0".
    std::string fraction() const;

    // Same value, not necessarily the same representation.
    bool same_value(const Ratio& other) const;
    bool operator==(const Ratio&) const = default;
};

inline constexpr std::string_view kNotComputable = "not computable";

Ratio add(const Ratio& a, const Ratio& b);
Ratio divide(const Ratio& a, std::uint64_t k);
// Parses a printed percentage such as "92.19" or "95" into an exact ratio of 100.
Ratio ratio_from_percent(std::string_view text);

struct ConfusionMatrix4 {
    // counts[observed][predicted]
    std::array<std::array<std::uint64_t, kCategoryCount>, kCategoryCount> counts{};

    std::uint64_t total() const;
    std::uint64_t trace() const;
    Ratio accuracy() const { return {trace(), total()}; }
    bool operator==(const ConfusionMatrix4&) const = default;
};

struct ConfusionMatrix2 {
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tp = 0;

    std::uint64_t total() const { return tn + fp + fn + tp; }
    void add(BinaryLabel observed, BinaryLabel predicted);
    bool operator==(const ConfusionMatrix2&) const = default;
};

struct Observation {
    DiagnosticCategory observed = DiagnosticCategory::negative;
    DiagnosticCategory predicted = DiagnosticCategory::negative;
};

ConfusionMatrix4 tabulate_confusion4(std::span<const Observation> observations);
ConfusionMatrix4 tabulate_confusion4(std::span<const PredictionRow> rows);

ConfusionMatrix2 group_confusion(const ConfusionMatrix4& m);

// Positive iff at least three of the five grouped votes are positive.
BinaryLabel majority_vote(std::span<const DiagnosticCategory> votes);

struct VoteOutcome {
    std::string set_id;
    DiagnosticCategory observed = DiagnosticCategory::negative;
    std::array<DiagnosticCategory, corpus::kVoteSetSize> votes{};
    BinaryLabel prediction = BinaryLabel::negative;
    std::size_t agreeing = 0;  // votes whose group matches the observed group
    bool correct = false;

    // "3/5 Correct"
    std::string verdict() const;
};

VoteOutcome score_vote_set(std::string set_id, DiagnosticCategory observed, std::span<const DiagnosticCategory> votes);

struct CaseResult {
    ConfusionMatrix2 matrix;
    std::vector<VoteOutcome> outcomes;  // parallel to the vote sets
};

// Every patch of every set must have a prediction.
CaseResult case_confusion(std::span<const corpus::VoteSet> sets, std::span<const PredictionRow> predictions);

enum class Metric { accuracy, sensitivity, specificity, ppv, npv };

inline constexpr std::array<Metric, 5> kAllMetrics{Metric::accuracy, Metric::sensitivity, Metric::specificity,
                                                   Metric::ppv, Metric::npv};

std::string_view metric_name(Metric metric);

struct DiagnosticMetrics {
    Ratio accuracy;
    Ratio sensitivity;
    Ratio specificity;
    Ratio ppv;
    Ratio npv;

    const Ratio& operator[](Metric metric) const;
    bool operator==(const DiagnosticMetrics&) const = default;
};

DiagnosticMetrics diagnostic_metrics(const ConfusionMatrix2& m);

struct MetricRow {
    std::string label;
    std::array<Ratio, 5> values;  // in kAllMetrics order

    static MetricRow from(std::string label, const DiagnosticMetrics& metrics);
};

// Unweighted exact mean per metric. Rejects an empty list and any
// not-computable entry, naming the user and metric.
MetricRow aggregate_users(std::span<const MetricRow> rows, std::string label = "Means");

// Everything derived from one user's predictions.
struct UserReport {
    std::string label;
    ConfusionMatrix4 image4;
    ConfusionMatrix2 image2;
    CaseResult cases;
    DiagnosticMetrics image_metrics;
    DiagnosticMetrics case_metrics;
};

UserReport build_user_report(std::string label, std::span<const PredictionRow> predictions);

// Vote sets recovered from prediction rows: per slide, patch_id order, chunks of five.
std::vector<corpus::VoteSet> vote_sets_from_predictions(std::span<const PredictionRow> predictions);

} // namespace slns::eval
