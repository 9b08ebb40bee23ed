#include "slnscreen/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace slns::report {

using eval::ConfusionMatrix2;
using eval::ConfusionMatrix4;
using eval::MetricRow;
using eval::Ratio;

namespace {

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Lines without trailing '\r', skipping blank ones. Pairs of (line number, text).
std::vector<std::pair<std::size_t, std::string>> csv_lines(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out.emplace_back(n, line);
    }
    return out;
}

std::uint64_t parse_count(const std::string& s, const std::string& where) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty()) {
        throw ValidationError(where + ": '" + s + "' is not a non-negative integer");
    }
    return v;
}

DiagnosticCategory parse_category(const std::string& s, const std::string& where) {
    const std::uint64_t v = parse_count(s, where);
    if (v > 3) throw ValidationError(where + ": category code " + s + " is outside 0..3");
    return static_cast<DiagnosticCategory>(v);
}

double parse_probability(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw ValidationError(where + ": '" + s + "' is not a probability");
    }
    return v;
}

std::string format(const char* fmt, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

std::string ratio_line(std::string_view name, const Ratio& r) {
    if (!r.computable()) return std::string(name) + ": " + r.fraction() + " = " + std::string(eval::kNotComputable) + "\n";
    return std::string(name) + ": " + r.fraction() + " = " + r.rendered() + "%\n";
}

std::string render_matrix4(const ConfusionMatrix4& m) {
    std::string out = format("%-18s%12s%12s%12s%12s\n", "Observed \\ Pred", "Negative(0)", "ITC(1)", "Micro(2)", "Macro(3)");
    for (DiagnosticCategory o : kAllCategories) {
        const auto& row = m.counts[static_cast<std::size_t>(code(o))];
        const std::string label = std::string(category_name(o)) + " (" + std::to_string(code(o)) + ")";
        out += format("%-18s%12llu%12llu%12llu%12llu\n", label.c_str(), static_cast<unsigned long long>(row[0]),
                      static_cast<unsigned long long>(row[1]), static_cast<unsigned long long>(row[2]),
                      static_cast<unsigned long long>(row[3]));
    }
    return out;
}

std::string render_matrix2(const ConfusionMatrix2& m, const char* neg, const char* pos) {
    std::string out = format("%-24s%14s%14s\n", "Observed \\ Pred", "negative", "positive");
    out += format("%-24s%14llu%14llu\n", neg, static_cast<unsigned long long>(m.tn), static_cast<unsigned long long>(m.fp));
    out += format("%-24s%14llu%14llu\n", pos, static_cast<unsigned long long>(m.fn), static_cast<unsigned long long>(m.tp));
    return out;
}

std::string render_metrics(const eval::DiagnosticMetrics& m) {
    std::string out;
    out += ratio_line("Accuracy", m.accuracy);
    out += ratio_line("Sensitivity", m.sensitivity);
    out += ratio_line("Specificity", m.specificity);
    out += ratio_line("PPV", m.ppv);
    out += ratio_line("NPV", m.npv);
    return out;
}

void metric_rows(std::string& out, std::string_view section, const eval::DiagnosticMetrics& m) {
    for (eval::Metric metric : eval::kAllMetrics) {
        const Ratio& r = m[metric];
        out += std::string(section) + "," + std::string(eval::metric_name(metric)) + "," + std::to_string(r.numerator) +
               "," + std::to_string(r.denominator) + "," + r.rendered() + "\n";
    }
}

ConfusionMatrix2 read_matrix2(const std::filesystem::path& file) {
    const auto lines = csv_lines(read_text(file));
    if (lines.size() != 2 || lines[0].second != "tn,fp,fn,tp") {
        throw ValidationError(file.string() + ": expected header 'tn,fp,fn,tp' and one data row");
    }
    const auto f = split_csv(lines[1].second);
    const std::string where = file.string() + ":" + std::to_string(lines[1].first);
    if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
    return {parse_count(f[0], where), parse_count(f[1], where), parse_count(f[2], where), parse_count(f[3], where)};
}

} // namespace

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::string predictions_csv(std::span<const PredictionRow> rows) {
    std::string out = std::string(kPredictionsHeader) + "\n";
    for (const PredictionRow& r : rows) {
        out += r.patch_id + "," + r.slide_id + "," + r.case_id + "," + std::to_string(code(r.observed_dx)) + "," +
               std::to_string(code(r.predicted_dx));
        for (double p : r.probabilities) out += format(",%.9g", p);
        out += "\n";
    }
    return out;
}

std::vector<PredictionRow> parse_predictions_csv(std::string_view text, std::string_view source) {
    const auto lines = csv_lines(text);
    if (lines.empty() || lines[0].second != kPredictionsHeader) {
        throw ValidationError(std::string(source) + ": expected header '" + std::string(kPredictionsHeader) + "'");
    }
    std::vector<PredictionRow> rows;
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string where = std::string(source) + ":" + std::to_string(lines[i].first);
        const auto f = split_csv(lines[i].second);
        if (f.size() != 9) throw ValidationError(where + ": expected 9 fields, found " + std::to_string(f.size()));
        PredictionRow r;
        r.patch_id = f[0];
        r.slide_id = f[1];
        r.case_id = f[2];
        if (r.patch_id.empty() || r.slide_id.empty() || r.case_id.empty()) throw ValidationError(where + ": empty id");
        if (!seen.insert(r.patch_id).second) throw ValidationError(where + ": duplicate patch_id '" + r.patch_id + "'");
        r.observed_dx = parse_category(f[3], where);
        r.predicted_dx = parse_category(f[4], where);
        for (std::size_t k = 0; k < kCategoryCount; ++k) r.probabilities[k] = parse_probability(f[5 + k], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
    return parse_predictions_csv(read_text(path), path.string());
}

std::string metrics_csv(const eval::UserReport& report) {
    std::string out = "section,metric,numerator,denominator,rendered\n";
    const Ratio acc4 = report.image4.accuracy();
    out += "image_4class,accuracy," + std::to_string(acc4.numerator) + "," + std::to_string(acc4.denominator) + "," +
           acc4.rendered() + "\n";
    metric_rows(out, "image_grouped", report.image_metrics);
    metric_rows(out, "case_voted", report.case_metrics);
    return out;
}

std::string render_user_report(const eval::UserReport& report) {
    std::string out;
    out += "== " + report.label + " ==\n\n";
    out += "Image-by-image accuracy\n";
    out += render_matrix4(report.image4);
    out += ratio_line("Accuracy", report.image4.accuracy());
    out += "\nGrouped ranking (0,1 negative; 2,3 positive)\n";
    out += render_matrix2(report.image2, "Negative (0) or ITC (1)", "Micro (2) or Macro (3)");
    out += render_metrics(report.image_metrics);

    out += "\nMajority voting (" + std::to_string(report.cases.outcomes.size()) + " sets of 5)\n";
    out += format("%-16s%-10s%-14s%s\n", "set", "observed", "predicted", "result");
    for (const eval::VoteOutcome& v : report.cases.outcomes) {
        std::string votes;
        for (DiagnosticCategory c : v.votes) votes += (votes.empty() ? "" : " ") + std::to_string(code(c));
        out += format("%-16s%-10d%-14s%s\n", v.set_id.c_str(), code(v.observed), votes.c_str(), v.verdict().c_str());
    }
    out += "\nCase-level data with majority voting\n";
    out += render_matrix2(report.cases.matrix, "Observed negative", "Observed positive");
    out += render_metrics(report.case_metrics);
    return out;
}

std::string render_metric_rows(std::span<const MetricRow> rows, const MetricRow& means) {
    std::string out = format("%-16s%12s%12s%12s%12s%12s\n", "User", "Accuracy", "Sensitivity", "Specificity", "PPV", "NPV");
    const auto line = [&](const MetricRow& r) {
        out += format("%-16s", r.label.c_str());
        for (const Ratio& v : r.values) out += format("%12s", v.rendered().c_str());
        out += "\n";
    };
    for (const MetricRow& r : rows) line(r);
    line(means);
    return out;
}

UserMetrics user_metrics(const eval::UserReport& report) {
    return {report.label, report.image_metrics, report.case_metrics};
}

UserMetrics parse_metrics_csv(std::string_view text, std::string label, std::string_view source) {
    const auto lines = csv_lines(text);
    if (lines.empty() || lines[0].second != "section,metric,numerator,denominator,rendered") {
        throw ValidationError(std::string(source) + ": not a metrics CSV (unexpected header)");
    }
    UserMetrics um{std::move(label), {}, {}};
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string where = std::string(source) + ":" + std::to_string(lines[i].first);
        const auto f = split_csv(lines[i].second);
        if (f.size() != 5) throw ValidationError(where + ": expected 5 fields");
        eval::DiagnosticMetrics* target = f[0] == "image_grouped" ? &um.image : f[0] == "case_voted" ? &um.cases : nullptr;
        if (target == nullptr) continue;
        const Ratio r{parse_count(f[2], where), parse_count(f[3], where)};
        Ratio* slot = f[1] == "accuracy"      ? &target->accuracy
                      : f[1] == "sensitivity" ? &target->sensitivity
                      : f[1] == "specificity" ? &target->specificity
                      : f[1] == "ppv"         ? &target->ppv
                      : f[1] == "npv"         ? &target->npv
                                              : nullptr;
        if (slot == nullptr) throw ValidationError(where + ": unknown metric '" + f[1] + "'");
        *slot = r;
        seen.insert(f[0] + "." + f[1]);
    }
    if (seen.size() != 10) {
        throw ValidationError(std::string(source) + ": expected all five metrics for image_grouped and case_voted");
    }
    return um;
}

std::string render_agreement(std::span<const UserMetrics> users) {
    std::vector<MetricRow> case_rows;
    std::vector<MetricRow> image_rows;
    for (const UserMetrics& u : users) {
        case_rows.push_back(MetricRow::from(u.label, u.cases));
        image_rows.push_back(MetricRow::from(u.label, u.image));
    }
    std::string out = "Case level (majority voting)\n";
    out += render_metric_rows(case_rows, eval::aggregate_users(case_rows));
    out += "\nImage level (grouped ranking)\n";
    out += render_metric_rows(image_rows, eval::aggregate_users(image_rows));
    return out;
}

const std::string& ReferenceTables::printed_value(std::string_view key) const {
    const auto it = printed.find(key);
    if (it == printed.end()) throw ValidationError("fixtures lack printed value '" + std::string(key) + "'");
    return it->second;
}

ReferenceTables load_fixtures(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("fixtures directory not found: " + dir.string());
    ReferenceTables fx;

    {
        const auto file = dir / "table1_user1.csv";
        const auto lines = csv_lines(read_text(file));
        if (lines.size() != 5 || lines[0].second != "observed,pred0,pred1,pred2,pred3") {
            throw ValidationError(file.string() + ": expected a header and 4 rows");
        }
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const std::string where = file.string() + ":" + std::to_string(lines[i].first);
            const auto f = split_csv(lines[i].second);
            if (f.size() != 5) throw ValidationError(where + ": expected 5 fields");
            const auto o = static_cast<std::size_t>(code(parse_category(f[0], where)));
            for (std::size_t k = 0; k < kCategoryCount; ++k) fx.table1.counts[o][k] = parse_count(f[1 + k], where);
        }
    }
    fx.table2 = read_matrix2(dir / "table2_user1.csv");
    fx.table4 = read_matrix2(dir / "table4_user1.csv");

    {
        const auto file = dir / "table3_votes.csv";
        const auto lines = csv_lines(read_text(file));
        if (lines.empty() || lines[0].second != "observed,v1,v2,v3,v4,v5,printed") {
            throw ValidationError(file.string() + ": unexpected header");
        }
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const std::string where = file.string() + ":" + std::to_string(lines[i].first);
            const auto f = split_csv(lines[i].second);
            if (f.size() != 7) throw ValidationError(where + ": expected 7 fields");
            VoteExample ex;
            ex.observed = parse_category(f[0], where);
            for (std::size_t k = 0; k < 5; ++k) ex.votes[k] = parse_category(f[1 + k], where);
            ex.printed = f[6];
            fx.table3.push_back(std::move(ex));
        }
    }

    {
        const auto file = dir / "table5_users.csv";
        const auto lines = csv_lines(read_text(file));
        if (lines.empty() || lines[0].second != "user,accuracy,sensitivity,specificity,ppv,npv") {
            throw ValidationError(file.string() + ": unexpected header");
        }
        bool have_means = false;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const std::string where = file.string() + ":" + std::to_string(lines[i].first);
            const auto f = split_csv(lines[i].second);
            if (f.size() != 6) throw ValidationError(where + ": expected 6 fields");
            MetricRow row{f[0], {}};
            for (std::size_t k = 0; k < 5; ++k) {
                try {
                    row.values[k] = eval::ratio_from_percent(f[1 + k]);
                } catch (const ValidationError& e) {
                    throw ValidationError(where + ": " + e.what());
                }
            }
            if (row.label == "Means") {
                fx.table5_means = std::move(row);
                have_means = true;
            } else {
                fx.table5_users.push_back(std::move(row));
            }
        }
        if (!have_means || fx.table5_users.empty()) throw ValidationError(file.string() + ": needs user rows and a Means row");
    }

    {
        const auto file = dir / "printed_values.csv";
        const auto lines = csv_lines(read_text(file));
        if (lines.empty() || lines[0].second != "key,value") throw ValidationError(file.string() + ": unexpected header");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto f = split_csv(lines[i].second);
            if (f.size() != 2) throw ValidationError(file.string() + ":" + std::to_string(lines[i].first) + ": expected 2 fields");
            fx.printed.emplace(f[0], f[1]);
        }
    }
    return fx;
}

std::string render_reference_tables(const ReferenceTables& fx) {
    std::string out;
    out += "Table 1. Image-by-image accuracy (user 1)\n";
    out += render_matrix4(fx.table1);
    out += ratio_line("Accuracy", fx.table1.accuracy());
    out += "  reference: " + fx.printed_value("table1.accuracy") + "%\n";

    const ConfusionMatrix2 grouped = eval::group_confusion(fx.table1);
    out += "\nTable 2. Grouped ranking (derived from Table 1)\n";
    out += render_matrix2(grouped, "Negative (0) or ITC (1)", "Micro (2) or Macro (3)");
    out += ratio_line("Accuracy", eval::diagnostic_metrics(grouped).accuracy);
    out += "  reference: " + fx.printed_value("table2.accuracy") + "%";
    out += grouped == fx.table2 ? " (reference matrix matches)\n" : " (reference matrix DIFFERS)\n";

    out += "\nTable 3. Majority voting examples\n";
    for (std::size_t i = 0; i < fx.table3.size(); ++i) {
        const VoteExample& ex = fx.table3[i];
        const eval::VoteOutcome v = eval::score_vote_set("example-" + std::to_string(i + 1), ex.observed, ex.votes);
        std::string votes;
        for (DiagnosticCategory c : ex.votes) votes += (votes.empty() ? "" : " ") + std::to_string(code(c));
        out += format("observed %d  predicted %s  -> %-14s reference: %s\n", code(ex.observed), votes.c_str(),
                      v.verdict().c_str(), ex.printed.c_str());
    }

    const eval::DiagnosticMetrics m4 = eval::diagnostic_metrics(fx.table4);
    out += "\nTable 4. Majority voting with grouped ranking (user 1)\n";
    out += render_matrix2(fx.table4, "Observed negative", "Observed positive");
    out += render_metrics(m4);
    out += "  reference: " + fx.printed_value("table4.accuracy") + " / " + fx.printed_value("table4.sensitivity") +
           " / " + fx.printed_value("table4.specificity") + " / " + fx.printed_value("table4.ppv") + " / " +
           fx.printed_value("table4.npv") + "\n";

    const eval::DiagnosticMetrics m2 = eval::diagnostic_metrics(grouped);
    out += "\nUser 1 row: accuracy from Table 4, other metrics from Table 2\n";
    out += format("%-16s%12s%12s%12s%12s%12s\n", "User 1", m4.accuracy.rendered().c_str(),
                  m2.sensitivity.rendered().c_str(), m2.specificity.rendered().c_str(), m2.ppv.rendered().c_str(),
                  m2.npv.rendered().c_str());

    out += "\nTable 5. Metrics for all users\n";
    const MetricRow means = eval::aggregate_users(fx.table5_users);
    out += render_metric_rows(fx.table5_users, means);
    std::string reference;
    for (const Ratio& r : fx.table5_means.values) reference += (reference.empty() ? "" : " / ") + r.rendered();
    out += "  reference means: " + reference + "\n";
    return out;
}

} // namespace slns::report
