#include "corpus_util.hpp"

#include "slnscreen/synthetic.hpp"
#include "slnscreen/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace slns;
using namespace slns::trainer;

namespace {

// One small corpus shared by every case in this file.
const corpus::Corpus& small_corpus() {
    static const corpus::Corpus c = [] {
        synthetic::GeneratorOptions o;
        o.layout.cases_per_category = {1, 1, 1, 1};
        o.seed = 9;
        o.split.policy = corpus::SplitPolicy::image;
        return synthetic::generate_synthetic_corpus(testutil::scratch_dir("trainer-corpus"), o);
    }();
    return c;
}

nn::ModelConfig tiny_model(std::uint64_t seed = 1) {
    nn::ModelConfig c;
    c.seed = seed;
    c.layers = {nn::ConvLayer{ConvSpec{5, 5, 3, 4, 4, Padding::same}, true},
                nn::MaxPoolLayer{5, 5},
                nn::FlattenLayer{},
                nn::DenseLayer{8},
                nn::ReluLayer{},
                nn::DropoutLayer{0.25},
                nn::DenseLayer{4},
                nn::SoftmaxLayer{}};
    return c;
}

TrainConfig quick(std::size_t epochs = 2) {
    TrainConfig t;
    t.batch_size = 16;
    t.max_epochs = epochs;
    t.seed = 4;
    return t;
}

} // namespace

TEST_CASE("training is reproducible and independent of thread count") {
    const TrainResult a = train(small_corpus(), tiny_model(), quick());
    TrainConfig threaded = quick();
    threaded.threads = 3;
    const TrainResult b = train(small_corpus(), tiny_model(), threaded);
    CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
    CHECK(a.report.csv() == b.report.csv());
    CHECK(a.report.summary() == b.report.summary());

    TrainConfig other = quick();
    other.seed = 5;
    CHECK(serialize_checkpoint(train(small_corpus(), tiny_model(), other).checkpoint) !=
          serialize_checkpoint(a.checkpoint));
}

TEST_CASE("report and checkpoint metadata agree") {
    std::vector<EpochRecord> seen;
    const TrainResult r = train(small_corpus(), tiny_model(), quick(3), [&](const EpochRecord& e) { seen.push_back(e); });
    REQUIRE(r.report.epochs.size() == seen.size());
    CHECK(seen.size() <= 3);
    CHECK(r.checkpoint.metadata.epochs_run == seen.size());
    CHECK(r.checkpoint.metadata.final_validation_loss == r.report.best().val_loss);
    CHECK(r.checkpoint.metadata.seed == 4);
    for (const auto& e : seen) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.val_accuracy >= 0.0);
        CHECK(e.val_accuracy <= 1.0);
        CHECK(r.report.best().val_loss <= e.val_loss);
    }
    const std::string csv = r.report.csv();
    CHECK(csv.rfind("epoch,train_loss,val_loss,val_acc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(seen.size()) + 1);
    CHECK(r.report.summary().find("seconds") == std::string::npos);

    // Restored weights reproduce the best validation loss.
    const nn::Model m = model_from_checkpoint(r.checkpoint, 4);
    const auto rows = evaluate_model(m, small_corpus(), corpus::Split::val);
    double loss = 0.0;
    for (const auto& row : rows) loss -= std::log(row.probabilities[static_cast<std::size_t>(code(row.observed_dx))]);
    CHECK(loss / static_cast<double>(rows.size()) == doctest::Approx(r.report.best().val_loss).epsilon(1e-4));
}

TEST_CASE("early stopping fires after `patience` epochs without improvement") {
    TrainConfig t = quick(30);
    t.patience = 1;
    t.optimizer.learning_rate = 0.05;  // large steps make a non-improving epoch near-certain
    const TrainResult r = train(small_corpus(), tiny_model(), t);
    CHECK(r.report.stop_reason == StopReason::early_stop);
    CHECK(r.report.epochs.size() == r.report.best_epoch + 1);
}

TEST_CASE("evaluate_split rows are ordered by patch id and normalized") {
    const TrainResult r = train(small_corpus(), tiny_model(), quick(1));
    const auto rows = evaluate_split(r.checkpoint, small_corpus(), corpus::Split::test, 2);
    REQUIRE(rows.size() == small_corpus().count(corpus::Split::test));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i) CHECK(rows[i - 1].patch_id < rows[i].patch_id);
        double sum = 0.0;
        for (double p : rows[i].probabilities) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        const auto& patch = small_corpus().patch(rows[i].patch_id);
        CHECK(rows[i].observed_dx == patch.observed_dx);
        CHECK(rows[i].slide_id == patch.slide_id);
        CHECK(rows[i].case_id == small_corpus().slide(patch.slide_id).case_id);
        CHECK(rows[i].predicted_dx == nn::argmax_category(std::vector<float>(rows[i].probabilities.begin(),
                                                                             rows[i].probabilities.end())));
    }
    CHECK(evaluate_split(r.checkpoint, small_corpus(), corpus::Split::test, 1).size() == rows.size());
}

TEST_CASE("training preconditions") {
    nn::ModelConfig wrong_input = nn::ModelConfig::reduced_config();
    CHECK_THROWS_AS(train(small_corpus(), wrong_input, quick(1)), ValidationError);
    TrainConfig bad = quick(1);
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(small_corpus(), tiny_model(), bad), ValidationError);
    bad = quick(1);
    bad.optimizer.learning_rate = std::nan("");
    CHECK_THROWS_AS(train(small_corpus(), tiny_model(), bad), ValidationError);

    std::vector<corpus::Split> no_val;
    for (const auto& p : small_corpus().patches())
        no_val.push_back(p.split == corpus::Split::val ? corpus::Split::train : p.split);
    try {
        train(small_corpus().with_splits(no_val), tiny_model(), quick(1));
        FAIL("empty validation split accepted");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()) == "validation split is empty");
    }
}

TEST_CASE("a huge learning rate is reported as divergence, not silently trained") {
    TrainConfig t = quick(3);
    t.optimizer.kind = nn::OptimizerKind::sgd;
    t.optimizer.learning_rate = 1e30;
    try {
        train(small_corpus(), tiny_model(), t);
        FAIL("diverged run finished");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("training diverged") != std::string::npos);
    }
}
