// mipic: train, evaluate and inspect nested sentence encoders.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mipic/checkpoint.hpp"
#include "mipic/errors.hpp"
#include "mipic/evaluator.hpp"
#include "mipic/gradcheck.hpp"
#include "mipic/manifest.hpp"
#include "mipic/matrix_io.hpp"
#include "mipic/report.hpp"
#include "mipic/similarity.hpp"
#include "mipic/synth.hpp"
#include "mipic/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mipic::IoError("cannot write " + path.string());
    out << text;
    if (!out) throw mipic::IoError("failed writing " + path.string());
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("mipic");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    if (const char* level = std::getenv("MIPIC_LOG_LEVEL")) {
        const auto parsed = spdlog::level::from_str(level);
        if (parsed == spdlog::level::off && std::string(level) != "off") {
            spdlog::warn("unknown MIPIC_LOG_LEVEL '{}', keeping 'info'", level);
        } else {
            spdlog::set_level(parsed);
        }
    }
}

struct TrainArgs {
    std::string config, corpus, out = "run";
    bool no_sia = false, no_pic = false, mrl_only = false, save_optimizer = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_steps;
};

int run_train(const TrainArgs& a) {
    const auto start = Clock::now();
    mipic::RunConfig cfg;
    if (!a.config.empty()) {
        cfg = mipic::load_run_config(a.config);
    } else {
        cfg.model = mipic::desk_model_config();
    }
    if (!a.corpus.empty()) cfg.train.corpus = a.corpus;
    if (cfg.train.corpus.empty()) throw mipic::ConfigError("no corpus: pass --corpus or set train.corpus");
    if (a.seed) cfg.model.seed = cfg.train.seed = *a.seed;
    if (a.max_steps) cfg.train.max_steps = *a.max_steps;
    cfg.train.ablation.no_sia = cfg.train.ablation.no_sia || a.no_sia;
    cfg.train.ablation.no_pic = cfg.train.ablation.no_pic || a.no_pic;
    cfg.train.ablation.mrl_only = cfg.train.ablation.mrl_only || a.mrl_only;
    cfg.train.save_optimizer_state = cfg.train.save_optimizer_state || a.save_optimizer;

    const auto corpus = mipic::load_corpus(cfg.train.corpus, cfg.model.max_len);
    if (cfg.model.vocab_size == 0) {
        cfg.model.vocab_size = corpus.vocabulary.size();
    } else if (cfg.model.vocab_size != corpus.vocabulary.size()) {
        throw mipic::ConfigError("model.vocab_size is " + std::to_string(cfg.model.vocab_size) + " but the corpus yields " +
                                 std::to_string(corpus.vocabulary.size()) + " ids");
    }
    cfg.train.validate();
    spdlog::info("training on {} sentences, vocabulary {} ids, {} steps", corpus.sequences.size(), corpus.vocabulary.size(),
                 mipic::total_steps(cfg.train, corpus.sequences.size()));

    mipic::MipicModel model(cfg.model);
    const fs::path out = a.out;
    const auto result = mipic::train(model, corpus, cfg.train, {out});

    mipic::RunManifest m;
    m.command = "train";
    m.config = cfg;
    m.seed = cfg.train.seed;
    m.code_version = mipic::code_version();
    m.inputs.push_back(mipic::digest(cfg.train.corpus));
    if (!a.config.empty()) m.inputs.push_back(mipic::digest(a.config));
    for (const auto& entry : fs::directory_iterator(out)) {
        if (entry.path().filename() != mipic::kManifestName) m.outputs.push_back(entry.path().string());
    }
    std::sort(m.outputs.begin(), m.outputs.end());
    m.wall_seconds = seconds_since(start);
    mipic::write_manifest(out, m);
    std::cout << "final loss " << result.trace.back().total << " after " << result.steps << " steps; model at "
              << (out / "model.json").string() << "\n";
    return 0;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            dims.push_back(v);
        } catch (const std::exception&) {
            throw mipic::ConfigError("--dims: '" + item + "' is not a positive integer");
        }
    }
    return dims;
}

struct EvalArgs {
    std::string checkpoint, sts, pairs, cls_train, cls_test, dims, out;
    bool plot_data = false;
    std::uint64_t seed = 0;
};

int run_evaluate(const EvalArgs& a) {
    const auto start = Clock::now();
    auto ckpt = mipic::load_checkpoint(a.checkpoint);
    mipic::eval::EvalInputs inputs;
    std::vector<std::string> input_files{a.checkpoint};
    auto opt = [&](const std::string& s, std::optional<fs::path>& slot) {
        if (!s.empty()) {
            slot = s;
            input_files.push_back(s);
        }
    };
    opt(a.sts, inputs.sts);
    opt(a.pairs, inputs.pairs);
    opt(a.cls_train, inputs.cls_train);
    opt(a.cls_test, inputs.cls_test);
    const auto dims = a.dims.empty() ? ckpt.config.nested_dims : parse_dims(a.dims);

    const std::string checkpoint_id = fs::path(a.checkpoint).filename().string() + "@" +
                                      mipic::sha256_file(a.checkpoint).substr(0, 12);
    const auto reports =
        mipic::eval::evaluate(ckpt.model->encoder(), ckpt.vocabulary, inputs, dims, checkpoint_id, a.seed);

    const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() / "eval" : fs::path(a.out);
    fs::create_directories(out);
    mipic::RunManifest m;
    m.command = "evaluate";
    m.config = {{"dims", dims}, {"model", ckpt.config}};
    m.seed = a.seed;
    m.code_version = mipic::code_version();
    for (const auto& f : input_files) m.inputs.push_back(mipic::digest(f));

    write_text(out / "report.json", json{{"reports", reports}}.dump(2) + "\n");
    const std::string csv = mipic::eval::reports_csv(reports);
    write_text(out / "report.csv", csv);
    m.outputs = {(out / "report.json").string(), (out / "report.csv").string()};
    if (a.plot_data) {
        write_text(out / "plot.dat", mipic::eval::reports_plot_data(reports));
        m.outputs.push_back((out / "plot.dat").string());
    }
    m.wall_seconds = seconds_since(start);
    mipic::write_manifest(out, m);
    std::cout << csv;
    return 0;
}

struct GradcheckArgs {
    std::string config, out;
    std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
    mipic::ModelConfig model = mipic::tiny_model_config();
    if (!a.config.empty()) model = mipic::load_run_config(a.config).model;
    model.seed = a.seed;
    mipic::GradcheckOptions options;
    options.seed = a.seed;
    const auto report = mipic::run_gradcheck(model, options);

    std::cout << "parameters: " << report.parameter_count << "\n";
    for (const auto& t : report.terms) {
        std::cout << (t.passed ? "ok   " : "FAIL ") << t.term << "  worst rel " << t.worst_relative << " at "
                  << t.worst_parameter << " (analytic " << t.analytic << ", numeric " << t.numeric << ")\n";
    }
    std::cout << "elapsed " << report.seconds << " s\n";
    if (!a.out.empty()) {
        const fs::path out = a.out;
        fs::create_directories(out);
        write_text(out / "gradcheck.json", json(report).dump(2) + "\n");
        mipic::RunManifest m{"gradcheck", json(model), a.seed, mipic::code_version(), {}, {(out / "gradcheck.json").string()},
                             report.seconds};
        if (!a.config.empty()) m.inputs.push_back(mipic::digest(a.config));
        mipic::write_manifest(out, m);
    }
    if (const auto* bad = report.first_failure()) {
        spdlog::error("gradient check failed for {} at {} (relative error {:.3g})", bad->term, bad->worst_parameter,
                      bad->worst_relative);
        return static_cast<int>(mipic::ErrorKind::Numerical);
    }
    return 0;
}

int run_cka(const std::string& x_path, const std::string& y_path) {
    const auto x = mipic::read_matrix(x_path);
    const auto y = mipic::read_matrix(y_path);
    const auto v = mipic::sim::cka_linear(x, y);
    if (v.degenerate) spdlog::warn("one input has zero centered variance; CKA reported as 0");
    std::cout.precision(17);
    std::cout << v.value << "\n";
    return 0;
}

int run_synth(std::uint64_t seed, const std::string& out_dir) {
    const auto start = Clock::now();
    mipic::synth::SynthOptions options;
    options.seed = seed;
    const auto files = mipic::synth::write_suite(mipic::synth::generate(options), out_dir);
    mipic::RunManifest m;
    m.command = "synth";
    m.config = {{"seed", seed}};
    m.seed = seed;
    m.code_version = mipic::code_version();
    for (const auto& f : files) m.outputs.push_back(f.string());
    m.wall_seconds = seconds_since(start);
    mipic::write_manifest(out_dir, m);
    for (const auto& f : files) std::cout << f.string() << "\n";
    return 0;
}

int run_report(const std::vector<std::string>& runs, const std::string& out_dir) {
    const auto start = Clock::now();
    std::vector<mipic::report::RunSummary> loaded;
    for (const auto& r : runs) {
        if (auto s = mipic::report::load_run(r)) loaded.push_back(std::move(*s));
    }
    if (loaded.empty()) throw mipic::InputError("no usable run directories");
    const auto table = mipic::report::build_table(loaded);
    const std::string csv = mipic::report::to_csv(table);
    const fs::path out = out_dir;
    fs::create_directories(out);
    write_text(out / "comparison.csv", csv);
    write_text(out / "comparison.json", mipic::report::to_json(table, loaded).dump(2) + "\n");
    mipic::RunManifest m;
    m.command = "report";
    m.config = {{"runs", runs}};
    m.code_version = mipic::code_version();
    for (const auto& r : loaded) {
        m.inputs.push_back(mipic::digest(fs::path(r.directory) / mipic::kManifestName));
    }
    m.outputs = {(out / "comparison.csv").string(), (out / "comparison.json").string()};
    m.wall_seconds = seconds_since(start);
    mipic::write_manifest(out, m);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Nested sentence embeddings with self-distilled alignment and chained InfoNCE"};
    app.set_version_flag("--version", mipic::code_version());
    app.require_subcommand(1);
    app.footer("Environment: MIPIC_LOG_LEVEL=trace|debug|info|warn|error|off\n"
               "Exit codes: 0 ok, 1 usage, 2 data, 3 numerical, 4 I/O");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train an encoder on a one-sentence-per-line corpus");
    train->add_option("--config", train_args.config, "JSON file with 'model' and 'train' sections")->check(CLI::ExistingFile);
    train->add_option("--corpus", train_args.corpus, "Training corpus (overrides train.corpus)")->check(CLI::ExistingFile);
    train->add_flag("--no-sia", train_args.no_sia, "Disable the intra-relational alignment loss");
    train->add_flag("--no-pic", train_args.no_pic, "Disable the information chaining loss");
    train->add_flag("--mrl-only", train_args.mrl_only, "Plain multi-prefix contrastive training (alpha = 1)");
    train->add_option("--seed", train_args.seed, "Seed for initialisation, shuffling and dropout");
    train->add_option("--max-steps", train_args.max_steps, "Stop after this many optimisation steps");
    train->add_flag("--save-optimizer", train_args.save_optimizer, "Store AdamW moments in checkpoints");
    train->add_option("--out", train_args.out, "Output directory")->capture_default_str();

    EvalArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "Score truncated embeddings of a trained checkpoint");
    evaluate->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file (model.json)")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--sts", eval_args.sts, "STS file: sent1<TAB>sent2<TAB>score")->check(CLI::ExistingFile);
    evaluate->add_option("--pairs", eval_args.pairs, "Pair file: sent1<TAB>sent2<TAB>0|1")->check(CLI::ExistingFile);
    auto* cls_train = evaluate->add_option("--cls-train", eval_args.cls_train, "Probe training file: sentence<TAB>label")
                          ->check(CLI::ExistingFile);
    auto* cls_test = evaluate->add_option("--cls-test", eval_args.cls_test, "Probe test file: sentence<TAB>label")
                         ->check(CLI::ExistingFile);
    cls_train->needs(cls_test);
    cls_test->needs(cls_train);
    evaluate->add_option("--dims", eval_args.dims, "Comma-separated prefix widths (default: all nested dims)");
    evaluate->add_option("--out", eval_args.out, "Output directory (default: <checkpoint dir>/eval)");
    evaluate->add_flag("--plot-data", eval_args.plot_data, "Also write plot.dat (dim, metric) series");
    evaluate->add_option("--seed", eval_args.seed, "Seed recorded in the report")->capture_default_str();

    GradcheckArgs gc_args;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    gradcheck->add_option("--config", gc_args.config, "JSON config; its 'model' section replaces the tiny default")
        ->check(CLI::ExistingFile);
    gradcheck->add_option("--seed", gc_args.seed, "Seed for initialisation, batch and dropout")->capture_default_str();
    gradcheck->add_option("--out", gc_args.out, "Directory for gradcheck.json and a manifest");

    std::string cka_x, cka_y;
    auto* cka = app.add_subcommand("cka", "Linear CKA between two numeric matrix files (rows = examples)");
    cka->add_option("x", cka_x, "First matrix (whitespace or comma separated)")->required()->check(CLI::ExistingFile);
    cka->add_option("y", cka_y, "Second matrix, same number of rows")->required()->check(CLI::ExistingFile);

    std::uint64_t synth_seed = 0;
    std::string synth_out = "synth";
    auto* synth = app.add_subcommand("synth", "Generate the synthetic training and evaluation suite");
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

    std::vector<std::string> report_runs;
    std::string report_out = "report";
    auto* report = app.add_subcommand("report", "Side-by-side per-dim comparison of run directories");
    report->add_option("runs", report_runs, "Run directories (each with manifest.json)")->required();
    report->add_option("--out", report_out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(mipic::ErrorKind::Usage);
    }

    try {
        if (*train) return run_train(train_args);
        if (*evaluate) return run_evaluate(eval_args);
        if (*gradcheck) return run_gradcheck(gc_args);
        if (*cka) return run_cka(cka_x, cka_y);
        if (*synth) return run_synth(synth_seed, synth_out);
        if (*report) return run_report(report_runs, report_out);
    } catch (const mipic::Error& e) {
        spdlog::error("{}", e.what());
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(mipic::ErrorKind::Io);
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("malformed JSON: {}", e.what());
        return static_cast<int>(mipic::ErrorKind::Data);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(mipic::ErrorKind::Usage);
    }
    return static_cast<int>(mipic::ErrorKind::Usage);
}
