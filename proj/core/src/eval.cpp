#include "slnscreen/eval.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

namespace slns::eval {

namespace {

using u128 = unsigned __int128;

std::uint64_t narrow(u128 v) {
    if (v > std::numeric_limits<std::uint64_t>::max()) throw ValidationError("rational arithmetic overflow");
    return static_cast<std::uint64_t>(v);
}

u128 gcd128(u128 a, u128 b) {
    while (b != 0) {
        const u128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

Ratio make_reduced(u128 n, u128 d) {
    if (d == 0) return {};
    const u128 g = gcd128(n, d);
    return {narrow(n / g), narrow(d / g)};
}

} // namespace

Ratio Ratio::reduced() const {
    return computable() ? make_reduced(numerator, denominator) : *this;
}

std::int64_t Ratio::hundredths() const {
    if (!computable()) throw ValidationError("ratio " + fraction() + " is not computable");
    const u128 n = static_cast<u128>(numerator) * 20000u + denominator;
    return static_cast<std::int64_t>(n / (static_cast<u128>(denominator) * 2u));
}

double Ratio::percent() const {
    if (!computable()) throw ValidationError("ratio " + fraction() + " is not computable");
    return 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::string Ratio::rendered() const {
    if (!computable()) return std::string(kNotComputable);
    const std::int64_t h = hundredths();
    std::string frac = std::to_string(h % 100);
    if (frac.size() < 2) frac.insert(0, "0");
    return std::to_string(h / 100) + "." + frac;
}

std::string Ratio::fraction() const {
    return std::to_string(numerator) + "/" + std::to_string(denominator);
}

bool Ratio::same_value(const Ratio& other) const {
    if (!computable() || !other.computable()) return computable() == other.computable();
    return static_cast<u128>(numerator) * other.denominator == static_cast<u128>(other.numerator) * denominator;
}

Ratio add(const Ratio& a, const Ratio& b) {
    if (!a.computable() || !b.computable()) return {};
    return make_reduced(static_cast<u128>(a.numerator) * b.denominator + static_cast<u128>(b.numerator) * a.denominator,
                        static_cast<u128>(a.denominator) * b.denominator);
}

Ratio divide(const Ratio& a, std::uint64_t k) {
    if (!a.computable() || k == 0) return {};
    return make_reduced(a.numerator, static_cast<u128>(a.denominator) * k);
}

Ratio ratio_from_percent(std::string_view text) {
    const auto bad = [&] { return ValidationError("'" + std::string(text) + "' is not a percentage"); };
    if (text.empty()) throw bad();
    std::uint64_t digits = 0;
    std::uint64_t scale = 100;
    bool seen_point = false;
    std::size_t count = 0;
    for (char ch : text) {
        if (ch == '.') {
            if (seen_point) throw bad();
            seen_point = true;
            continue;
        }
        if (ch < '0' || ch > '9' || ++count > 15) throw bad();
        digits = digits * 10 + static_cast<std::uint64_t>(ch - '0');
        if (seen_point) scale *= 10;
    }
    if (count == 0) throw bad();
    return {digits, scale};
}

std::uint64_t ConfusionMatrix4::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
}

std::uint64_t ConfusionMatrix4::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kCategoryCount; ++i) t += counts[i][i];
    return t;
}

void ConfusionMatrix2::add(BinaryLabel observed, BinaryLabel predicted) {
    const bool o = observed == BinaryLabel::positive;
    const bool p = predicted == BinaryLabel::positive;
    ++(o ? (p ? tp : fn) : (p ? fp : tn));
}

ConfusionMatrix4 tabulate_confusion4(std::span<const Observation> observations) {
    ConfusionMatrix4 m;
    for (const Observation& o : observations) ++m.counts[static_cast<std::size_t>(code(o.observed))][static_cast<std::size_t>(code(o.predicted))];
    return m;
}

ConfusionMatrix4 tabulate_confusion4(std::span<const PredictionRow> rows) {
    ConfusionMatrix4 m;
    for (const PredictionRow& r : rows) ++m.counts[static_cast<std::size_t>(code(r.observed_dx))][static_cast<std::size_t>(code(r.predicted_dx))];
    return m;
}

ConfusionMatrix2 group_confusion(const ConfusionMatrix4& m) {
    ConfusionMatrix2 out;
    for (DiagnosticCategory o : kAllCategories) {
        for (DiagnosticCategory p : kAllCategories) {
            const std::uint64_t n = m.counts[static_cast<std::size_t>(code(o))][static_cast<std::size_t>(code(p))];
            const bool op = is_positive(o);
            const bool pp = is_positive(p);
            (op ? (pp ? out.tp : out.fn) : (pp ? out.fp : out.tn)) += n;
        }
    }
    return out;
}

BinaryLabel majority_vote(std::span<const DiagnosticCategory> votes) {
    if (votes.size() != corpus::kVoteSetSize) {
        throw ValidationError("majority vote needs exactly " + std::to_string(corpus::kVoteSetSize) + " votes, got " +
                              std::to_string(votes.size()));
    }
    const auto positive = std::count_if(votes.begin(), votes.end(), [](DiagnosticCategory c) { return is_positive(c); });
    return positive >= 3 ? BinaryLabel::positive : BinaryLabel::negative;
}

std::string VoteOutcome::verdict() const {
    return std::to_string(agreeing) + "/" + std::to_string(corpus::kVoteSetSize) + (correct ? " Correct" : " Incorrect");
}

VoteOutcome score_vote_set(std::string set_id, DiagnosticCategory observed, std::span<const DiagnosticCategory> votes) {
    VoteOutcome out;
    out.prediction = majority_vote(votes);
    out.set_id = std::move(set_id);
    out.observed = observed;
    std::copy(votes.begin(), votes.end(), out.votes.begin());
    out.agreeing = static_cast<std::size_t>(
        std::count_if(votes.begin(), votes.end(), [&](DiagnosticCategory c) { return group(c) == group(observed); }));
    out.correct = out.prediction == group(observed);
    return out;
}

CaseResult case_confusion(std::span<const corpus::VoteSet> sets, std::span<const PredictionRow> predictions) {
    std::map<std::string_view, const PredictionRow*> by_id;
    for (const PredictionRow& r : predictions) by_id.emplace(r.patch_id, &r);
    CaseResult result;
    for (const corpus::VoteSet& set : sets) {
        std::array<DiagnosticCategory, corpus::kVoteSetSize> votes{};
        for (std::size_t i = 0; i < corpus::kVoteSetSize; ++i) {
            const auto it = by_id.find(set.patch_ids[i]);
            if (it == by_id.end()) {
                throw ValidationError("vote set " + set.set_id + ": no prediction for patch '" + set.patch_ids[i] + "'");
            }
            votes[i] = it->second->predicted_dx;
        }
        VoteOutcome outcome = score_vote_set(set.set_id, set.observed_dx, votes);
        result.matrix.add(group(set.observed_dx), outcome.prediction);
        result.outcomes.push_back(std::move(outcome));
    }
    return result;
}

std::string_view metric_name(Metric metric) {
    switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::sensitivity: return "sensitivity";
    case Metric::specificity: return "specificity";
    case Metric::ppv: return "ppv";
    case Metric::npv: return "npv";
    }
    return "?";
}

const Ratio& DiagnosticMetrics::operator[](Metric metric) const {
    switch (metric) {
    case Metric::accuracy: return accuracy;
    case Metric::sensitivity: return sensitivity;
    case Metric::specificity: return specificity;
    case Metric::ppv: return ppv;
    case Metric::npv: return npv;
    }
    return accuracy;
}

DiagnosticMetrics diagnostic_metrics(const ConfusionMatrix2& m) {
    return {
        {m.tp + m.tn, m.total()},
        {m.tp, m.tp + m.fn},
        {m.tn, m.tn + m.fp},
        {m.tp, m.tp + m.fp},
        {m.tn, m.tn + m.fn},
    };
}

MetricRow MetricRow::from(std::string label, const DiagnosticMetrics& metrics) {
    MetricRow row{std::move(label), {}};
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) row.values[i] = metrics[kAllMetrics[i]];
    return row;
}

MetricRow aggregate_users(std::span<const MetricRow> rows, std::string label) {
    if (rows.empty()) throw ValidationError("cannot aggregate zero users");
    MetricRow mean{std::move(label), {}};
    for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
        Ratio sum{0, 1};
        for (const MetricRow& row : rows) {
            if (!row.values[m].computable()) {
                throw ValidationError("user '" + row.label + "': " + std::string(metric_name(kAllMetrics[m])) +
                                      " is not computable and cannot be averaged");
            }
            sum = add(sum, row.values[m]);
        }
        mean.values[m] = divide(sum, rows.size());
    }
    return mean;
}

std::vector<corpus::VoteSet> vote_sets_from_predictions(std::span<const PredictionRow> predictions) {
    std::vector<corpus::VoteCandidate> candidates;
    candidates.reserve(predictions.size());
    for (const PredictionRow& r : predictions) candidates.push_back({r.patch_id, r.slide_id, r.observed_dx});
    return corpus::chunk_vote_sets(std::move(candidates));
}

UserReport build_user_report(std::string label, std::span<const PredictionRow> predictions) {
    UserReport r;
    r.label = std::move(label);
    r.image4 = tabulate_confusion4(predictions);
    r.image2 = group_confusion(r.image4);
    const std::vector<corpus::VoteSet> sets = vote_sets_from_predictions(predictions);
    r.cases = case_confusion(sets, predictions);
    r.image_metrics = diagnostic_metrics(r.image2);
    r.case_metrics = diagnostic_metrics(r.cases.matrix);
    return r;
}

} // namespace slns::eval
