#pragma once

#include "slnscreen/eval.hpp"
#include "slnscreen/prediction.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace slns::report {

// patch_id,slide_id,case_id,observed_dx,predicted_dx,p0,p1,p2,p3
inline constexpr std::string_view kPredictionsHeader = "patch_id,slide_id,case_id,observed_dx,predicted_dx,p0,p1,p2,p3";

std::string predictions_csv(std::span<const PredictionRow> rows);
// `source` names the file in error messages.
std::vector<PredictionRow> parse_predictions_csv(std::string_view text, std::string_view source = "predictions");
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// section,metric,numerator,denominator,rendered
std::string metrics_csv(const eval::UserReport& report);

// Image-level 4x4 and grouped tables, the per-set voting section and the
// case-level table with its metrics.
std::string render_user_report(const eval::UserReport& report);

std::string render_metric_rows(std::span<const eval::MetricRow> rows, const eval::MetricRow& means);

// Both metric sets of one user, as recovered from a metrics CSV.
struct UserMetrics {
    std::string label;
    eval::DiagnosticMetrics image;
    eval::DiagnosticMetrics cases;
};

UserMetrics user_metrics(const eval::UserReport& report);
UserMetrics parse_metrics_csv(std::string_view text, std::string label, std::string_view source = "metrics");

// Per-user rows plus means at case and image granularity.
std::string render_agreement(std::span<const UserMetrics> users);

struct VoteExample {
    DiagnosticCategory observed = DiagnosticCategory::negative;
    std::array<DiagnosticCategory, 5> votes{};
    std::string printed;  // e.g. "2/5 Incorrect"
};

// Reference tables 1-5 as shipped in the fixtures directory.
struct ReferenceTables {
    eval::ConfusionMatrix4 table1;
    eval::ConfusionMatrix2 table2;
    std::vector<VoteExample> table3;
    eval::ConfusionMatrix2 table4;
    std::vector<eval::MetricRow> table5_users;
    eval::MetricRow table5_means;
    std::map<std::string, std::string, std::less<>> printed;  // key -> printed percentage

    const std::string& printed_value(std::string_view key) const;
};

ReferenceTables load_fixtures(const std::filesystem::path& dir);

// Recomputes Tables 1-5 from the fixtures and prints them next to the
// reference figures.
std::string render_reference_tables(const ReferenceTables& fixtures);

} // namespace slns::report
