#include "kanwit/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "kanwit/io.hpp"
#include "kanwit/kan.hpp"
#include "kanwit/manifest.hpp"
#include "kanwit/ranking.hpp"
#include "kanwit/symbolic.hpp"

namespace kanwit::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class StageTimer {
  public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    std::int64_t elapsed_ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

std::string in_run(const RunConfig& config, const std::string& relative) {
    return (fs::path(config.output_dir) / relative).string();
}

// Resolves a user-supplied path ("" = the stage default inside the run dir).
std::string resolve(const RunConfig& config, const std::string& given,
                    const std::string& fallback) {
    return given.empty() ? in_run(config, fallback) : given;
}

RunManifest open_manifest(const RunConfig& config) {
    RunManifest manifest(config.output_dir);
    manifest.begin();
    return manifest;
}

json report_to_json(const kan::ClassificationReport& r, const std::string& data_path,
                    long rows) {
    json j;
    j["format"] = "kanwit-report-v1";
    j["dataset"] = data_path;
    j["rows"] = rows;
    j["confusion"] = {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
    j["accuracy"] = r.accuracy;
    j["precision"] = {{"separable", r.precision[0]}, {"entangled", r.precision[1]}};
    j["recall"] = {{"separable", r.recall[0]}, {"entangled", r.recall[1]}};
    j["f1"] = {{"separable", r.f1[0]}, {"entangled", r.f1[1]}};
    return j;
}

kan::TrainConfig train_config_for(const RunConfig& config) {
    kan::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train");
    return tc;
}

void check_model_dataset(const kan::KanModel& model, const dataset::Dataset& data,
                         const std::string& data_path) {
    if (model.input_width() != static_cast<int>(data.columns.size()))
        throw SchemaError(data_path + ": " + std::to_string(data.columns.size()) +
                          " feature columns do not match the model's input width " +
                          std::to_string(model.input_width()));
    if (!model.feature_labels.empty() && model.feature_labels != data.columns)
        throw SchemaError(data_path + ": feature columns do not match the model's labels");
}

}  // namespace

void cmd_gen_data(const RunConfig& config) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const dataset::Dataset data =
        dataset::generate_dataset(config.family, config.n, config.seed, config.noise_sigma);
    const dataset::SplitResult splits =
        dataset::split(data, config.split, derive_seed(config.seed, "split"));
    dataset::save_dataset(data, in_run(config, "data/dataset.csv"));
    dataset::save_dataset(splits.train, in_run(config, "data/train.csv"));
    dataset::save_dataset(splits.validation, in_run(config, "data/validation.csv"));
    dataset::save_dataset(splits.test, in_run(config, "data/test.csv"));
    manifest.record_stage("gen-data", config.describe(),
                          {"data/dataset.csv", "data/train.csv", "data/validation.csv",
                           "data/test.csv"},
                          timer.elapsed_ms());
    std::printf("gen-data: %ld rows (%ld entangled / %ld separable) -> %s/data\n",
                static_cast<long>(data.rows()), data.count(Label::Entangled),
                data.count(Label::Separable), config.output_dir.c_str());
}

void cmd_split(const RunConfig& config, const std::string& input_csv) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const std::string input = resolve(config, input_csv, "data/dataset.csv");
    const dataset::Dataset data = dataset::load_dataset(input);
    const dataset::SplitResult splits =
        dataset::split(data, config.split, derive_seed(config.seed, "split"));
    dataset::save_dataset(splits.train, in_run(config, "data/train.csv"));
    dataset::save_dataset(splits.validation, in_run(config, "data/validation.csv"));
    dataset::save_dataset(splits.test, in_run(config, "data/test.csv"));
    manifest.record_stage("split", config.describe(),
                          {"data/train.csv", "data/validation.csv", "data/test.csv"},
                          timer.elapsed_ms());
    std::printf("split: %ld rows -> %ld train / %ld validation / %ld test\n",
                static_cast<long>(data.rows()), static_cast<long>(splits.train.rows()),
                static_cast<long>(splits.validation.rows()),
                static_cast<long>(splits.test.rows()));
}

void cmd_train(const RunConfig& config, const std::string& train_csv,
               const std::string& validation_csv, const std::string& test_csv) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const std::string train_path = resolve(config, train_csv, "data/train.csv");
    const std::string validation_path = resolve(config, validation_csv, "data/validation.csv");
    const std::string test_path = resolve(config, test_csv, "data/test.csv");
    const dataset::Dataset train_data = dataset::load_dataset(train_path);
    const dataset::Dataset validation = dataset::load_dataset(validation_path);
    const dataset::Dataset test = dataset::load_dataset(test_path);

    const std::vector<int> architecture = config.model_architecture();
    if (architecture.front() != static_cast<int>(train_data.columns.size()))
        throw SchemaError(train_path + ": " + std::to_string(train_data.columns.size()) +
                          " feature columns do not match architecture input width " +
                          std::to_string(architecture.front()));

    kan::KanModel start =
        kan::KanModel::init(architecture, config.grid, derive_seed(config.seed, "init"));
    start.feature_labels = train_data.columns;
    const kan::TrainConfig tc = train_config_for(config);
    const kan::TrainResult result = kan::train(start, train_data, validation, tc);

    kan::TrainInfo info;
    info.config = tc;
    info.dataset_seed = train_data.seed;
    info.best_epoch = result.best_epoch;
    info.best_validation_accuracy = result.best_validation_accuracy;
    kan::save_model(result.model, info, in_run(config, "models/model.json"));

    const kan::ClassificationReport report = kan::evaluate(result.model, test);
    json j = report_to_json(report, test_path, static_cast<long>(test.rows()));
    j["best_epoch"] = result.best_epoch;
    j["best_validation_accuracy"] = result.best_validation_accuracy;
    io::write_file_atomic(in_run(config, "models/report.json"), j.dump(2) + "\n");

    manifest.record_stage("train", config.describe(),
                          {"models/model.json", "models/report.json"}, timer.elapsed_ms());
    std::printf("train: best epoch %d, validation accuracy %.4f, test accuracy %.4f\n",
                result.best_epoch, result.best_validation_accuracy, report.accuracy);
}

void cmd_evaluate(const RunConfig& config, const std::string& model_path,
                  const std::string& data_csv) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const std::string model_file = resolve(config, model_path, "models/model.json");
    const std::string data_path = resolve(config, data_csv, "data/test.csv");
    const kan::LoadedModel loaded = kan::load_model(model_file);
    const dataset::Dataset data = dataset::load_dataset(data_path);
    check_model_dataset(loaded.model, data, data_path);
    const kan::ClassificationReport report = kan::evaluate(loaded.model, data);
    const json j = report_to_json(report, data_path, static_cast<long>(data.rows()));
    io::write_file_atomic(in_run(config, "models/evaluation.json"), j.dump(2) + "\n");
    manifest.record_stage("evaluate", config.describe(), {"models/evaluation.json"},
                          timer.elapsed_ms());
    std::printf("evaluate: accuracy %.4f on %ld rows (tp %ld, fp %ld, tn %ld, fn %ld)\n",
                report.accuracy, static_cast<long>(data.rows()), report.tp, report.fp, report.tn,
                report.fn);
}

void cmd_bootstrap(const RunConfig& config) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const kan::TrainConfig tc = train_config_for(config);
    const ranking::BootstrapOutcome outcome = ranking::bootstrap_rank(
        config.family, config.bootstrap_models, config.n, config.seed, tc, config.jobs);
    const ranking::TopKFrequencyTable table = ranking::aggregate_topk(outcome.rankings);

    json jr;
    jr["format"] = "kanwit-rankings-v1";
    jr["family"] = to_string(config.family);
    jr["n_models"] = config.bootstrap_models;
    jr["failed_models"] = outcome.failed_models;
    auto models = json::array();
    for (const auto& r : outcome.rankings) {
        json jm;
        jm["model_id"] = r.model_id;
        jm["labels"] = r.labels;
        jm["scores"] = std::vector<double>(r.scores.data(), r.scores.data() + r.scores.size());
        jm["secondary_scores"] = std::vector<double>(
            r.secondary_scores.data(), r.secondary_scores.data() + r.secondary_scores.size());
        jm["order"] = r.order;
        jm["degenerate"] = r.degenerate;
        models.push_back(std::move(jm));
    }
    jr["rankings"] = std::move(models);
    io::write_file_atomic(in_run(config, "ranking/rankings.json"), jr.dump(2) + "\n");

    ranking::save_topk_table(table, in_run(config, "ranking/topk_counts.csv"));

    json js;
    js["format"] = "kanwit-selections-v1";
    auto selections = json::array();
    for (int m = 1; m <= table.k_max(); ++m) {
        const ranking::FeatureSelection sel = ranking::select_features(table, m);
        selections.push_back({{"m", sel.m},
                              {"observables", sel.observables},
                              {"architecture", sel.architecture}});
    }
    js["selections"] = std::move(selections);
    io::write_file_atomic(in_run(config, "ranking/selections.json"), js.dump(2) + "\n");

    const std::vector<ranking::CurvePoint> curve =
        ranking::reduced_model_curve(table, config.family, config.n, config.seed, tc);
    std::string csv = "m,architecture,observables,accuracy\n";
    char line[256];
    for (const auto& point : curve) {
        std::string arch, obs;
        for (std::size_t i = 0; i < point.architecture.size(); ++i)
            arch += (i ? "-" : "") + std::to_string(point.architecture[i]);
        for (std::size_t i = 0; i < point.observables.size(); ++i)
            obs += (i ? " " : "") + point.observables[i];
        std::snprintf(line, sizeof line, "%d,%s,%s,%.17g\n", point.m, arch.c_str(), obs.c_str(),
                      point.accuracy);
        csv += line;
    }
    io::write_file_atomic(in_run(config, "ranking/curve.csv"), csv);

    manifest.record_stage("bootstrap", config.describe(),
                          {"ranking/rankings.json", "ranking/topk_counts.csv",
                           "ranking/selections.json", "ranking/curve.csv"},
                          timer.elapsed_ms());
    std::printf("bootstrap: %zu/%d models ranked", outcome.rankings.size(),
                config.bootstrap_models);
    if (!outcome.failed_models.empty())
        std::printf(" (%zu diverged)", outcome.failed_models.size());
    std::printf(", curve written for m=1..%d\n", table.k_max());
}

void cmd_extract(const RunConfig& config, const std::string& model_path,
                 const std::string& probe_csv) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const std::string model_file = resolve(config, model_path, "models/model.json");
    const std::string probe_path = resolve(config, probe_csv, "data/test.csv");
    const kan::LoadedModel loaded = kan::load_model(model_file);
    const dataset::Dataset probe = dataset::load_dataset(probe_path);
    check_model_dataset(loaded.model, probe, probe_path);
    const symbolic::Extraction extraction = symbolic::extract_witness(loaded.model, probe);
    symbolic::save_witness(extraction.witness, extraction.report,
                           in_run(config, "witness/witness.json"));
    io::write_file_atomic(in_run(config, "witness/witness.txt"),
                          symbolic::render_witness(extraction.witness) + "\n");
    manifest.record_stage("extract", config.describe(),
                          {"witness/witness.json", "witness/witness.txt"}, timer.elapsed_ms());
    std::printf("extract: %s form, agreement %.4f with the network on %ld probe rows\n",
                extraction.witness.flattened ? "flattened" : "tree",
                extraction.report.agreement, extraction.report.probe_rows);
}

void cmd_eval_witness(const RunConfig& config, const std::string& witness_path,
                      const std::string& data_csv, const std::string& model_path) {
    RunManifest manifest = open_manifest(config);
    StageTimer timer;
    const std::string witness_file = resolve(config, witness_path, "witness/witness.json");
    const std::string data_path = resolve(config, data_csv, "data/test.csv");
    const symbolic::LoadedWitness loaded = symbolic::load_witness(witness_file);
    const dataset::Dataset data = dataset::load_dataset(data_path);

    long tp = 0, fp = 0, tn = 0, fn = 0;
    std::vector<Label> witness_labels(static_cast<std::size_t>(data.rows()));
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const symbolic::WitnessValue v = symbolic::evaluate_witness(
            loaded.witness, data.columns, data.features.row(i).transpose());
        witness_labels[static_cast<std::size_t>(i)] = v.label;
        const bool truth = data.labels[static_cast<std::size_t>(i)] == Label::Entangled;
        const bool predicted = v.label == Label::Entangled;
        if (predicted && truth)
            ++tp;
        else if (predicted && !truth)
            ++fp;
        else if (!predicted && !truth)
            ++tn;
        else
            ++fn;
    }
    const kan::ClassificationReport report =
        kan::ClassificationReport::from_confusion(tp, fp, tn, fn);
    json j = report_to_json(report, data_path, static_cast<long>(data.rows()));
    j["format"] = "kanwit-witness-eval-v1";
    j["witness"] = witness_file;

    if (!model_path.empty()) {
        const kan::LoadedModel model = kan::load_model(model_path);
        check_model_dataset(model.model, data, data_path);
        const Eigen::VectorXd z = kan::forward_logit_batch(model.model, data.features);
        long agree = 0;
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            const Label model_label = z(i) >= 0.0 ? Label::Entangled : Label::Separable;
            if (model_label == witness_labels[static_cast<std::size_t>(i)]) ++agree;
        }
        j["model"] = model_path;
        j["model_agreement"] = static_cast<double>(agree) / static_cast<double>(data.rows());
    }
    io::write_file_atomic(in_run(config, "witness/evaluation.json"), j.dump(2) + "\n");
    manifest.record_stage("eval-witness", config.describe(), {"witness/evaluation.json"},
                          timer.elapsed_ms());
    std::printf("eval-witness: accuracy %.4f on %ld rows", report.accuracy,
                static_cast<long>(data.rows()));
    if (j.contains("model_agreement"))
        std::printf(", model agreement %.4f", j["model_agreement"].get<double>());
    std::printf("\n");
}

int cmd_report(const RunConfig& config) {
    const RunManifest manifest = RunManifest::load(config.output_dir);
    const std::vector<std::string> problems = manifest.verify();
    std::printf("report: %zu stage(s) recorded in %s\n", manifest.stages().size(),
                (fs::path(config.output_dir) / "manifest.json").string().c_str());
    for (const auto& stage : manifest.stages()) {
        std::printf("  %-12s %6lld ms", stage.name.c_str(),
                    static_cast<long long>(stage.wall_ms));
        for (const auto& artifact : stage.artifacts)
            std::printf("  %s", artifact.path.c_str());
        std::printf("\n");
    }
    if (problems.empty()) {
        std::printf("report: all artifact digests verified\n");
        return 0;
    }
    for (const auto& p : problems) std::fprintf(stderr, "report: %s\n", p.c_str());
    return static_cast<int>(problems.size());
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"kanwit: entanglement-witness extraction pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand name

    RunConfig config;
    std::string config_file, profile;
    std::vector<std::string> overrides;

    std::string family_str, arch_str;
    app.add_option("--config", config_file, "key=value configuration file")
        ->check(CLI::ExistingFile);
    app.add_option("--profile", profile, "built-in profile: smoke or full");
    app.add_option("--set", overrides, "override one config key (key=value, repeatable)");
    auto* out_opt = app.add_option("--out", config.output_dir, "run directory for artifacts");
    auto* family_opt =
        app.add_option("--family", family_str, "state family: general9 or symmetric5");
    auto* n_opt = app.add_option("--n", config.n, "dataset size");
    auto* seed_opt = app.add_option("--seed", config.seed, "root seed");
    auto* noise_opt = app.add_option("--noise-sigma", config.noise_sigma,
                                     "feature noise standard deviation");
    auto* arch_opt = app.add_option("--architecture", arch_str, "layer widths, e.g. 9,6,3,1");
    auto* epochs_opt = app.add_option("--epochs", config.train.epochs, "training epochs");
    auto* batch_opt = app.add_option("--batch-size", config.train.batch_size, "batch size");
    auto* lr_opt = app.add_option("--learning-rate", config.train.learning_rate,
                                  "optimizer step size");
    auto* l1_opt = app.add_option("--l1", config.train.l1_activation_penalty,
                                  "activation sparsity penalty");
    auto* patience_opt = app.add_option("--patience", config.train.early_stop_patience,
                                        "early-stop patience in epochs");
    auto* models_opt =
        app.add_option("--models", config.bootstrap_models, "bootstrap model count");
    auto* jobs_opt = app.add_option("--jobs", config.jobs, "parallel bootstrap jobs");

    std::string input_csv, train_csv, validation_csv, test_csv, data_csv, model_path,
        witness_path;
    auto* gen = app.add_subcommand("gen-data", "generate and split a labeled dataset");
    auto* split_cmd = app.add_subcommand("split", "re-split an existing dataset CSV");
    split_cmd->add_option("--input", input_csv, "dataset CSV to split");
    auto* train_cmd = app.add_subcommand("train", "train a classifier on the split datasets");
    train_cmd->add_option("--train-csv", train_csv, "training split CSV");
    train_cmd->add_option("--validation-csv", validation_csv, "validation split CSV");
    train_cmd->add_option("--test-csv", test_csv, "test split CSV");
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a saved model on a dataset");
    eval_cmd->add_option("--model", model_path, "model JSON file");
    eval_cmd->add_option("--data", data_csv, "dataset CSV");
    auto* boot = app.add_subcommand("bootstrap",
                                    "rank features over independently trained models");
    auto* extract_cmd =
        app.add_subcommand("extract", "fit a symbolic witness to a trained model");
    extract_cmd->add_option("--model", model_path, "model JSON file");
    extract_cmd->add_option("--probe", data_csv, "probe dataset CSV");
    auto* witness_cmd = app.add_subcommand("eval-witness", "score a witness against labels");
    witness_cmd->add_option("--witness", witness_path, "witness JSON file");
    witness_cmd->add_option("--data", data_csv, "dataset CSV");
    witness_cmd->add_option("--model", model_path, "also report agreement with this model");
    auto* report_cmd = app.add_subcommand("report", "verify manifest digests for a run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        // Precedence: file < profile < individual flags (flags always win).
        RunConfig base;
        if (!config_file.empty()) base = RunConfig::from_file(config_file);
        if (!profile.empty()) base.apply_profile(profile);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("--set needs key=value, got '" + kv + "'");
            base.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (out_opt->count()) base.output_dir = config.output_dir;
        if (family_opt->count()) base.set("family", family_str);
        if (n_opt->count()) base.n = config.n;
        if (seed_opt->count()) base.seed = config.seed;
        if (noise_opt->count()) base.noise_sigma = config.noise_sigma;
        if (arch_opt->count()) base.set("architecture", arch_str);
        if (epochs_opt->count()) base.train.epochs = config.train.epochs;
        if (batch_opt->count()) base.train.batch_size = config.train.batch_size;
        if (lr_opt->count()) base.train.learning_rate = config.train.learning_rate;
        if (l1_opt->count())
            base.train.l1_activation_penalty = config.train.l1_activation_penalty;
        if (patience_opt->count())
            base.train.early_stop_patience = config.train.early_stop_patience;
        if (models_opt->count()) base.bootstrap_models = config.bootstrap_models;
        if (jobs_opt->count()) base.jobs = config.jobs;
        base.validate();

        if (gen->parsed())
            cmd_gen_data(base);
        else if (split_cmd->parsed())
            cmd_split(base, input_csv);
        else if (train_cmd->parsed())
            cmd_train(base, train_csv, validation_csv, test_csv);
        else if (eval_cmd->parsed())
            cmd_evaluate(base, model_path, data_csv);
        else if (boot->parsed())
            cmd_bootstrap(base);
        else if (extract_cmd->parsed())
            cmd_extract(base, model_path, data_csv);
        else if (witness_cmd->parsed())
            cmd_eval_witness(base, witness_path, data_csv, model_path);
        else if (report_cmd->parsed())
            return cmd_report(base) == 0 ? 0 : 3;
        return 0;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "kanwit: %s\n", e.what());
        return 2;
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "kanwit: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "kanwit: %s\n", e.what());
        return 2;
    } catch (const TrainingDivergence& e) {
        std::fprintf(stderr, "kanwit: training diverged: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "kanwit: %s\n", e.what());
        return 3;
    }
}

}  // namespace kanwit::cli
