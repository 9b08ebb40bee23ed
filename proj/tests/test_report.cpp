#include "corpus_util.hpp"

#include "slnscreen/report.hpp"

#include <doctest.h>

using namespace slns;
using namespace slns::report;

namespace {

std::vector<PredictionRow> sample_rows() {
    std::vector<PredictionRow> rows;
    for (int s = 0; s < 2; ++s)
        for (int p = 0; p < 5; ++p) {
            const auto obs = s ? DiagnosticCategory::macrometastasis : DiagnosticCategory::itc;
            rows.push_back({"C" + std::to_string(s) + "-S1-P0" + std::to_string(p), "C" + std::to_string(s) + "-S1",
                            "C" + std::to_string(s), obs, p == 0 ? DiagnosticCategory::negative : obs,
                            {0.1, 0.2, 0.3, 0.4 + 1e-9 * p}});
        }
    return rows;
}

std::string validation_message(const std::string& text) {
    try {
        parse_predictions_csv(text, "preds.csv");
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "accepted";
}

} // namespace

TEST_CASE("predictions CSV round trip") {
    const auto rows = sample_rows();
    const std::string text = predictions_csv(rows);
    CHECK(text.rfind(std::string(kPredictionsHeader) + "\n", 0) == 0);
    const auto back = parse_predictions_csv(text);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].patch_id == rows[i].patch_id);
        CHECK(back[i].predicted_dx == rows[i].predicted_dx);
        for (std::size_t k = 0; k < 4; ++k) CHECK(back[i].probabilities[k] == doctest::Approx(rows[i].probabilities[k]).epsilon(1e-9));
    }
    CHECK(predictions_csv(back) == text);
}

TEST_CASE("predictions CSV rejections name file and line") {
    const std::string good = predictions_csv(sample_rows());
    const std::string header = std::string(kPredictionsHeader) + "\n";
    CHECK(validation_message("a,b\n").find("preds.csv: expected header") == 0);
    CHECK(validation_message(header + "x,y,z,0,0,0.1,0.2,0.3\n") == "preds.csv:2: expected 9 fields, found 8");
    CHECK(validation_message(header + "x,y,z,4,0,0.1,0.2,0.3,0.4\n").find("preds.csv:2") == 0);
    CHECK(validation_message(header + "x,y,z,0,0,0.1,nan,0.3,0.4\n").find("not a probability") != std::string::npos);
    CHECK(validation_message(header + "x,y,z,0,0,0.1,1.5,0.3,0.4\n").find("not a probability") != std::string::npos);
    CHECK(validation_message(good + good.substr(header.size(), good.find('\n', header.size()) - header.size() + 1))
              .find("duplicate patch_id") != std::string::npos);
    CHECK(validation_message(header + ",y,z,0,0,0.1,0.2,0.3,0.4\n").find("empty id") != std::string::npos);
    CHECK_THROWS_AS(read_predictions("/nonexistent/preds.csv"), IoError);
}

TEST_CASE("metrics CSV carries exact fractions and parses back") {
    const eval::UserReport r = eval::build_user_report("u", sample_rows());
    const std::string csv = metrics_csv(r);
    CHECK(csv.find("image_4class,accuracy,8,10,80.00\n") != std::string::npos);
    CHECK(csv.find("case_voted,accuracy,2,2,100.00\n") != std::string::npos);
    const UserMetrics m = parse_metrics_csv(csv, "u");
    CHECK(m.image == r.image_metrics);
    CHECK(m.cases == r.case_metrics);
    CHECK_THROWS_AS(parse_metrics_csv("x\n", "u"), ValidationError);
    CHECK_THROWS_AS(parse_metrics_csv("section,metric,numerator,denominator,rendered\n", "u"), ValidationError);
}

TEST_CASE("user report text") {
    const eval::UserReport r = eval::build_user_report("alice", sample_rows());
    const std::string text = render_user_report(r);
    CHECK(text.find("== alice ==") != std::string::npos);
    CHECK(text.find("Accuracy: 8/10 = 80.00%") != std::string::npos);
    CHECK(text.find("C0-S1-V1") != std::string::npos);
    CHECK(text.find("4/5 Correct") != std::string::npos);
}

TEST_CASE("agreement table renders means at both granularities") {
    std::vector<UserMetrics> users;
    for (const char* label : {"a", "b"}) {
        UserMetrics u;
        u.label = label;
        u.image = eval::diagnostic_metrics({152, 8, 37, 123});
        u.cases = eval::diagnostic_metrics({32, 0, 5, 27});
        users.push_back(u);
    }
    const std::string text = render_agreement(users);
    CHECK(text.find("Means") != std::string::npos);
    CHECK(text.find("92.19") != std::string::npos);  // case accuracy
    CHECK(text.find("76.88") != std::string::npos);  // image sensitivity
    users[1].cases.ppv = eval::Ratio{};
    CHECK_THROWS_AS(render_agreement(users), ValidationError);
}

TEST_CASE("reference fixtures load and render") {
    const ReferenceTables fx = load_fixtures(SLNSCREEN_FIXTURES_DIR);
    CHECK(fx.table1.total() == 320);
    CHECK(fx.table3.size() == 4);
    CHECK(fx.table5_users.size() == 3);
    CHECK(fx.printed_value("table4.npv") == "86.5");
    CHECK_THROWS_AS(fx.printed_value("table9.x"), ValidationError);
    const std::string text = render_reference_tables(fx);
    CHECK(text.find("161/320 = 50.31%") != std::string::npos);
    CHECK(text.find("275/320 = 85.94%") != std::string::npos);
    CHECK(text.find("reference matrix matches") != std::string::npos);
    CHECK(text.find("91.15") != std::string::npos);
    CHECK_THROWS_AS(load_fixtures("/nonexistent"), IoError);

    const auto dir = testutil::scratch_dir("fixtures-bad");
    for (const auto& e : std::filesystem::directory_iterator(SLNSCREEN_FIXTURES_DIR))
        std::filesystem::copy_file(e.path(), dir / e.path().filename());
    write_text(dir / "table1_user1.csv", "observed,pred0,pred1,pred2,pred3\n0,1,2,3\n");
    CHECK_THROWS_AS(load_fixtures(dir), ValidationError);
    std::filesystem::remove_all(dir);
}
