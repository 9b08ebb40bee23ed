#include "cli.hpp"

#include "settings.hpp"

#include "slnscreen/checkpoint.hpp"
#include "slnscreen/corpus.hpp"
#include "slnscreen/eval.hpp"
#include "slnscreen/report.hpp"
#include "slnscreen/synthetic.hpp"
#include "slnscreen/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#ifndef SLNSCREEN_FIXTURES_DIR
#define SLNSCREEN_FIXTURES_DIR "fixtures"
#endif

namespace slns::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string manifest;
    std::string checkpoint;
    std::string predictions;
    std::string split = "test";
    std::string policy = "slide";
    std::string label_mode = "case";
    std::string label = "user";
    std::string fixtures = SLNSCREEN_FIXTURES_DIR;
    std::vector<std::string> reports;
    std::optional<std::size_t> threads;
};

Settings load_settings(const Options& o) {
    Settings s;
    if (!o.config.empty()) apply_config_file(s, o.config);
    if (o.seed) {
        s.model_seed = *o.seed;
        s.train.seed = *o.seed;
    }
    if (o.threads) s.train.threads = *o.threads;
    return s;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

corpus::Corpus open_manifest(const Options& o) {
    corpus::Corpus c = corpus::load_manifest(o.manifest);
    const corpus::LabelMode mode = corpus::parse_label_mode(o.label_mode);
    return mode == c.label_mode() ? c : c.relabeled(mode);
}

int cmd_generate(const Options& o, std::ostream& out) {
    const Settings s = load_settings(o);
    synthetic::GeneratorOptions g;
    g.layout = s.layout;
    g.seed = o.seed.value_or(1);
    g.split.fractions = s.fractions;
    g.split.policy = corpus::parse_policy(o.policy);
    g.split.case_coherent = s.case_coherent;
    const corpus::Corpus c = synthetic::generate_synthetic_corpus(o.out, g);
    out << "wrote " << c.cases().size() << " cases, " << c.slides().size() << " slides, " << c.patches().size()
        << " patches to " << o.out << " (train " << c.count(corpus::Split::train) << ", val "
        << c.count(corpus::Split::val) << ", test " << c.count(corpus::Split::test) << ")\n";
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const Settings s = load_settings(o);
    const corpus::Corpus c = open_manifest(o);
    const nn::ModelConfig mc = model_config(s);
    ensure_directory(o.out);
    const auto result = trainer::train(c, mc, s.train, [&](const trainer::EpochRecord& e) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %3zu  train_loss %.6g  val_loss %.6g  val_acc %.6g\n", e.epoch,
                      e.train_loss, e.val_loss, e.val_accuracy);
        err << buf << std::flush;
    });
    const fs::path dir = o.out;
    save_checkpoint(result.checkpoint, dir / "model.ckpt");
    report::write_text(dir / "train_report.csv", result.report.csv());
    report::write_text(dir / "train_summary.txt", result.report.summary());
    out << result.report.summary();
    err << "wall-clock seconds: " << result.report.wall_seconds << "\n";
    return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
    const Settings s = load_settings(o);
    const corpus::Corpus c = open_manifest(o);
    const Checkpoint ckpt = read_checkpoint(o.checkpoint);
    const auto rows = trainer::evaluate_split(ckpt, c, corpus::parse_split(o.split), s.train.threads);
    const fs::path file = o.out;
    if (file.has_parent_path()) ensure_directory(file.parent_path());
    report::write_text(file, report::predictions_csv(rows));
    out << "wrote " << rows.size() << " predictions to " << o.out << "\n";
    return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const auto rows = report::read_predictions(o.predictions);
    const eval::UserReport r = eval::build_user_report(o.label, rows);
    const std::string text = report::render_user_report(r);
    if (!o.out.empty()) {
        ensure_directory(o.out);
        report::write_text(fs::path(o.out) / "report.txt", text);
        report::write_text(fs::path(o.out) / "metrics.csv", report::metrics_csv(r));
    }
    out << text;
    return kExitOk;
}

int cmd_tables(const Options& o, std::ostream& out) {
    // A bare --fixtures means the fixtures shipped with the source tree.
    const std::string dir = o.fixtures.empty() ? SLNSCREEN_FIXTURES_DIR : o.fixtures;
    out << report::render_reference_tables(report::load_fixtures(dir));
    return kExitOk;
}

int cmd_agreement(const Options& o, std::ostream& out) {
    std::vector<report::UserMetrics> users;
    for (std::size_t i = 0; i < o.reports.size(); ++i) {
        std::string label = "User " + std::to_string(i + 1);
        std::string path = o.reports[i];
        if (const auto eq = path.find('='); eq != std::string::npos) {
            label = path.substr(0, eq);
            path = path.substr(eq + 1);
        }
        users.push_back(report::parse_metrics_csv(report::read_text(path), label, path));
    }
    const std::string text = report::render_agreement(users);
    if (!o.out.empty()) report::write_text(o.out, text);
    out << text;
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Rapid sentinel-lymph-node metastasis screen: synthetic corpus, CNN training and diagnostic metrics"};
    app.name("slnscreen");
    app.require_subcommand(0, 1);
    Options o;
    bool dump = false;
    app.add_flag("--dump-config", dump, "Print every config key with its default value and exit");
    app.add_option("--config", o.config, "Config file of 'key = value' lines (applied before --dump-config)")
        ->check(CLI::ExistingFile);

    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Config file of 'key = value' lines");
        sub->add_option("--seed", o.seed, "Seed override (model and training seeds, or the generator seed)");
    };
    const auto add_policy = [&](CLI::App* sub) {
        sub->add_option("--policy", o.policy, "Split granularity")->check(CLI::IsMember({"slide", "image"}));
    };
    const auto add_label_mode = [&](CLI::App* sub) {
        sub->add_option("--label-mode", o.label_mode, "Patch labels from the case (default) or the slide")
            ->check(CLI::IsMember({"case", "slide"}));
    };

    CLI::App* gen = app.add_subcommand("generate", "Write a synthetic corpus (manifest.jsonl + patches/)");
    gen->add_option("--out", o.out, "Output directory")->required();
    add_config(gen);
    add_policy(gen);

    CLI::App* tr = app.add_subcommand("train", "Train on a manifest; writes model.ckpt and the training report");
    tr->add_option("--manifest", o.manifest, "Corpus manifest (JSON Lines)")->required();
    tr->add_option("--out", o.out, "Output directory")->required();
    tr->add_option("--threads", o.threads, "Worker threads (results do not depend on it)");
    add_config(tr);
    add_label_mode(tr);

    CLI::App* pr = app.add_subcommand("predict", "Score one split with a checkpoint; writes a predictions CSV");
    pr->add_option("--manifest", o.manifest, "Corpus manifest (JSON Lines)")->required();
    pr->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
    pr->add_option("--split", o.split, "Split to score")->check(CLI::IsMember({"train", "val", "test"}));
    pr->add_option("--out", o.out, "Predictions CSV path")->required();
    pr->add_option("--threads", o.threads, "Worker threads (results do not depend on it)");
    add_config(pr);
    add_label_mode(pr);

    CLI::App* ev = app.add_subcommand("evaluate", "Confusion matrices, majority voting and metrics for a predictions CSV");
    ev->add_option("--predictions", o.predictions, "Predictions CSV")->required();
    ev->add_option("--out", o.out, "Directory for report.txt and metrics.csv");
    ev->add_option("--label", o.label, "User label shown in the report");

    CLI::App* tb = app.add_subcommand("tables", "Recompute reference tables 1-5 from the fixture files");
    tb->add_option("--fixtures", o.fixtures, "Fixtures directory")->expected(0, 1);

    CLI::App* ag = app.add_subcommand("agreement", "Per-user metric rows and means from several metrics.csv files");
    ag->add_option("reports", o.reports, "metrics.csv files, optionally as label=path")->required();
    ag->add_option("--out", o.out, "Also write the table to this file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return kExitOk;
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (dump) {
            out << dump_config(load_settings(o));
            return kExitOk;
        }
        if (gen->parsed()) return cmd_generate(o, out);
        if (tr->parsed()) return cmd_train(o, out, err);
        if (pr->parsed()) return cmd_predict(o, out);
        if (ev->parsed()) return cmd_evaluate(o, out);
        if (tb->parsed()) return cmd_tables(o, out);
        if (ag->parsed()) return cmd_agreement(o, out);
        out << app.help();
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

} // namespace slns::cli
