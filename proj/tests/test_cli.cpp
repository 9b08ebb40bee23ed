#include "corpus_util.hpp"

#include "cli.hpp"

#include "slnscreen/report.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using slns::cli::run;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// 17 cases -> 34 slides, which the default fractions split 27/3/4.
const char* kSmallConfig = R"(# small, fast setup
corpus.cases_negative = 5
corpus.cases_itc = 4
corpus.cases_micro = 4
corpus.cases_macro = 4
model.conv_channels = 4
model.dense_units = 8
train.max_epochs = 2
train.batch_size = 16
)";

// Generates the small corpus once for the whole file.
const fs::path& workspace() {
    static const fs::path dir = [] {
        const fs::path d = testutil::scratch_dir("cli");
        slns::report::write_text(d / "small.conf", kSmallConfig);
        const Outcome g = cli({"generate", "--out", (d / "corpus").string(), "--config", (d / "small.conf").string(),
                               "--seed", "3"});
        REQUIRE(g.code == 0);
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("tables --fixtures reproduces the reference arithmetic") {
    const Outcome r = cli({"tables", "--fixtures"});
    CHECK(r.code == 0);
    CHECK(r.out.find("161/320 = 50.31%") != std::string::npos);
    CHECK(r.out.find("275/320") != std::string::npos);
    CHECK(r.out.find("2/5 Incorrect") != std::string::npos);
    CHECK(r.out.find("59/64 = 92.19%") != std::string::npos);
    CHECK(r.out.find("91.15") != std::string::npos);
    CHECK(cli({"tables", "--fixtures", SLNSCREEN_FIXTURES_DIR}).out == r.out);
    CHECK(cli({"tables", "--fixtures", "/nonexistent/fixtures"}).code == 2);
}

TEST_CASE("config dump, overrides and rejections") {
    const Outcome d = cli({"--dump-config"});
    CHECK(d.code == 0);
    for (const char* key : {"model.conv_channels = 16,32,64,128", "train.batch_size = 32", "train.patience = 5",
                            "train.optimizer = adam", "split.case_coherent = false", "corpus.cases_macro = 10"}) {
        CHECK(d.out.find(key) != std::string::npos);
    }
    const fs::path dir = testutil::scratch_dir("cli-config");
    slns::report::write_text(dir / "ok.conf", "# comment\n\ntrain.batch_size = 8  # trailing\n");
    const Outcome ok = cli({"--config", (dir / "ok.conf").string(), "--dump-config"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("train.batch_size = 8") != std::string::npos);

    slns::report::write_text(dir / "bad.conf", "train.batch_size = 8\ntrain.bogus = 1\n");
    const Outcome bad = cli({"--config", (dir / "bad.conf").string(), "--dump-config"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("bad.conf:2") != std::string::npos);
    CHECK(bad.err.find("train.bogus") != std::string::npos);

    slns::report::write_text(dir / "value.conf", "train.batch_size = lots\n");
    CHECK(cli({"--config", (dir / "value.conf").string(), "--dump-config"}).code == 1);
    slns::report::write_text(dir / "nokey.conf", "just words\n");
    CHECK(cli({"--config", (dir / "nokey.conf").string(), "--dump-config"}).code == 1);
    CHECK(cli({"generate", "--out", (dir / "g").string(), "--config", (dir / "absent.conf").string()}).code == 2);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"train"}).code == 1);  // required options
    CHECK(cli({"generate", "--out", (dir / "g").string(), "--policy", "tile"}).code == 1);
    fs::remove_all(dir);
}

TEST_CASE("generate writes a loadable corpus with the configured layout") {
    const fs::path corpus = workspace() / "corpus";
    const auto c = slns::corpus::load_manifest(corpus / "manifest.jsonl");
    CHECK(c.cases().size() == 17);
    CHECK(c.count(slns::corpus::Split::test) == 160);
    CHECK(c.count(slns::corpus::Split::val) == 120);
}

TEST_CASE("train / predict / evaluate / agreement pipeline") {
    const fs::path w = workspace();
    const std::string manifest = (w / "corpus" / "manifest.jsonl").string();
    const std::string conf = (w / "small.conf").string();
    const Outcome t1 = cli({"train", "--manifest", manifest, "--out", (w / "run1").string(), "--config", conf});
    REQUIRE(t1.code == 0);
    CHECK(t1.err.find("epoch   1") != std::string::npos);
    const Outcome t2 = cli({"train", "--manifest", manifest, "--out", (w / "run2").string(), "--config", conf,
                            "--threads", "2"});
    REQUIRE(t2.code == 0);
    CHECK(slurp(w / "run1" / "model.ckpt") == slurp(w / "run2" / "model.ckpt"));
    CHECK(slurp(w / "run1" / "train_report.csv") == slurp(w / "run2" / "train_report.csv"));
    CHECK(slurp(w / "run1" / "train_summary.txt") == slurp(w / "run2" / "train_summary.txt"));

    const std::string ckpt = (w / "run1" / "model.ckpt").string();
    const std::string preds = (w / "preds.csv").string();
    REQUIRE(cli({"predict", "--manifest", manifest, "--checkpoint", ckpt, "--out", preds}).code == 0);
    CHECK(slns::report::read_predictions(preds).size() == 160);
    const std::string val_preds = (w / "val.csv").string();
    REQUIRE(cli({"predict", "--manifest", manifest, "--checkpoint", ckpt, "--split", "val", "--out", val_preds}).code == 0);
    CHECK(slns::report::read_predictions(val_preds).size() == 120);

    const Outcome e = cli({"evaluate", "--predictions", preds, "--out", (w / "eval").string(), "--label", "bob"});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("== bob ==") != std::string::npos);
    CHECK(e.out.find("Majority voting (32 sets of 5)") != std::string::npos);
    CHECK(slurp(w / "eval" / "report.txt") == e.out);
    const std::string metrics = (w / "eval" / "metrics.csv").string();
    CHECK(slurp(metrics).find("case_voted,accuracy,") != std::string::npos);

    // An untrained-looking run can leave PPV undefined; agreement refuses to average it.
    if (slurp(metrics).find("not computable") != std::string::npos) {
        const Outcome refused = cli({"agreement", metrics});
        CHECK(refused.code == 1);
        CHECK(refused.err.find("not computable") != std::string::npos);
    }
    std::string computable = "section,metric,numerator,denominator,rendered\nimage_4class,accuracy,1,2,50.00\n";
    for (const char* section : {"image_grouped", "case_voted"})
        for (const char* metric : {"accuracy", "sensitivity", "specificity", "ppv", "npv"})
            computable += std::string(section) + "," + metric + ",3,4,75.00\n";
    slns::report::write_text(w / "m.csv", computable);
    const std::string m = (w / "m.csv").string();
    const Outcome a = cli({"agreement", "first=" + m, m, "--out", (w / "agreement.txt").string()});
    CHECK(a.code == 0);
    CHECK(a.out.find("first") != std::string::npos);
    CHECK(a.out.find("User 2") != std::string::npos);
    CHECK(a.out.find("Means") != std::string::npos);
    CHECK(a.out.find("75.00") != std::string::npos);
    CHECK(slurp(w / "agreement.txt") == a.out);

    // Slide labels on the same checkpoint.
    const Outcome sl = cli({"predict", "--manifest", manifest, "--checkpoint", ckpt, "--label-mode", "slide", "--out",
                            (w / "slide.csv").string()});
    CHECK(sl.code == 0);

    SUBCASE("error exit codes") {
        CHECK(cli({"evaluate", "--predictions", (w / "missing.csv").string()}).code == 2);
        slns::report::write_text(w / "broken.csv", "nonsense\n");
        const Outcome b = cli({"evaluate", "--predictions", (w / "broken.csv").string()});
        CHECK(b.code == 1);
        CHECK(b.err.find("broken.csv") != std::string::npos);

        const std::string bytes = slurp(ckpt);
        slns::report::write_text(w / "short.ckpt", bytes.substr(0, bytes.size() / 2));
        const Outcome tr = cli({"predict", "--manifest", manifest, "--checkpoint", (w / "short.ckpt").string(), "--out",
                                (w / "x.csv").string()});
        CHECK(tr.code == 1);
        CHECK(tr.err.find("truncated") != std::string::npos);
        CHECK(cli({"predict", "--manifest", manifest, "--checkpoint", (w / "none.ckpt").string(), "--out",
                   (w / "x.csv").string()}).code == 2);

        slns::report::write_text(w / "bad.jsonl", "{\"kind\":\"case\"}\n");
        const Outcome m = cli({"train", "--manifest", (w / "bad.jsonl").string(), "--out", (w / "r").string()});
        CHECK(m.code == 1);
        CHECK(m.err.find("manifest line 1") != std::string::npos);
        CHECK(cli({"train", "--manifest", (w / "nope.jsonl").string(), "--out", (w / "r").string()}).code == 2);
        CHECK(cli({"agreement", (w / "broken.csv").string()}).code == 1);
    }
}
