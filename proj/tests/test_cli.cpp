#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "kanwit/commands.hpp"
#include "kanwit/dataset.hpp"
#include "kanwit/io.hpp"
#include "kanwit/manifest.hpp"
#include "kanwit/ranking.hpp"
#include "kanwit/runconfig.hpp"

using namespace kanwit;
using namespace kanwit::cli;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

struct DirGuard {
    std::string path;
    ~DirGuard() { fs::remove_all(path); }
};

struct FileGuard {
    std::string path;
    ~FileGuard() { fs::remove(path); }
};

// Exit code of the installed binary; stdout/stderr are discarded.
int run(const std::string& args) {
    const std::string cmd = std::string(KANWIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status >= 0);
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("run config resolves family-default architectures") {
    RunConfig config;
    CHECK(config.model_architecture() == std::vector<int>{9, 6, 3, 1});
    config.set("family", "symmetric5");
    CHECK(config.model_architecture() == std::vector<int>{5, 3, 1});
    config.set("architecture", "4,2,1");
    CHECK(config.model_architecture() == std::vector<int>{4, 2, 1});
}

TEST_CASE("run config set covers every key") {
    RunConfig c;
    c.set("family", "symmetric5");
    CHECK(c.family == Family::Symmetric5);
    c.set("n", "4000");
    CHECK(c.n == 4000);
    c.set("seed", "42");
    CHECK(c.seed == 42);
    c.set("noise_sigma", "0.05");
    CHECK(c.noise_sigma == 0.05);
    c.set("train_fraction", "0.6");
    c.set("validation_fraction", "0.3");
    c.set("test_fraction", "0.1");
    CHECK(c.split.train_fraction == 0.6);
    CHECK(c.split.validation_fraction == 0.3);
    CHECK(c.split.test_fraction == 0.1);
    c.set("architecture", "5,3,1");
    CHECK(c.architecture == std::vector<int>{5, 3, 1});
    c.set("grid_min", "-2.0");
    c.set("grid_max", "2.0");
    c.set("grid_intervals", "7");
    c.set("spline_degree", "2");
    CHECK(c.grid.min == -2.0);
    CHECK(c.grid.max == 2.0);
    CHECK(c.grid.intervals == 7);
    CHECK(c.grid.degree == 2);
    CHECK(c.grid.basis_count() == 9);
    c.set("epochs", "33");
    CHECK(c.train.epochs == 33);
    c.set("batch_size", "64");
    CHECK(c.train.batch_size == 64);
    c.set("learning_rate", "0.005");
    CHECK(c.train.learning_rate == 0.005);
    c.set("l1_activation_penalty", "0.001");
    CHECK(c.train.l1_activation_penalty == 0.001);
    c.set("early_stop_patience", "7");
    CHECK(c.train.early_stop_patience == 7);
    c.set("bootstrap_models", "8");
    CHECK(c.bootstrap_models == 8);
    c.set("jobs", "2");
    CHECK(c.jobs == 2);
    c.set("output_dir", "elsewhere");
    CHECK(c.output_dir == "elsewhere");
    c.set("profile", "smoke");
    CHECK(c.n == 5000);

    CHECK_THROWS_AS(c.set("bogus", "1"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("n", "soon"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("noise_sigma", "much"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("family", "general10"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("architecture", "a,b,c"), std::invalid_argument);
}

TEST_CASE("run config profiles set the published scales") {
    RunConfig c;
    c.apply_profile("smoke");
    CHECK(c.n == 5000);
    CHECK(c.bootstrap_models == 3);
    CHECK(c.train.epochs == 60);
    c.apply_profile("full");
    CHECK(c.n == 100000);
    CHECK(c.bootstrap_models == 20);
    CHECK(c.train.epochs == 200);
    CHECK_THROWS_AS(c.apply_profile("huge"), std::invalid_argument);
}

TEST_CASE("run config validation rejects inconsistent settings") {
    RunConfig ok;
    CHECK_NOTHROW(ok.validate());

    RunConfig c = ok;
    c.n = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.noise_sigma = -0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.bootstrap_models = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.jobs = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.output_dir.clear();
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.set("architecture", "9,6,3");  // final width must be 1
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.set("train_fraction", "0.9");  // fractions no longer sum to 1
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ok;
    c.train.epochs = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("run config loads key=value files with precise error lines") {
    FileGuard file{temp_path("kanwit_test_config.cfg")};
    io::write_file_atomic(file.path,
                          "# run settings\n"
                          "family = symmetric5\r\n"
                          "n=4000\n"
                          "\n"
                          "epochs = 17\n");
    const RunConfig c = RunConfig::from_file(file.path);
    CHECK(c.family == Family::Symmetric5);
    CHECK(c.n == 4000);
    CHECK(c.train.epochs == 17);

    io::write_file_atomic(file.path, "n=4000\nfamily symmetric5\n");
    try {
        (void)RunConfig::from_file(file.path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find(file.path) != std::string::npos);
    }

    io::write_file_atomic(file.path, "n=4000\n\nseed=green\n");
    try {
        (void)RunConfig::from_file(file.path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }

    CHECK_THROWS((void)RunConfig::from_file(temp_path("kanwit_no_such_config.cfg")));
}

TEST_CASE("run config describes itself as JSON") {
    RunConfig c;
    c.set("family", "symmetric5");
    c.set("n", "1234");
    c.set("seed", "9");
    const nlohmann::json j = nlohmann::json::parse(c.describe());
    CHECK(j.at("family") == "symmetric5");
    CHECK(j.at("n") == 1234);
    CHECK(j.at("seed") == 9);
    CHECK(j.at("architecture") == std::vector<int>{5, 3, 1});
    CHECK(j.at("grid").at("intervals") == 5);
    CHECK(j.contains("learning_rate"));
    CHECK(j.contains("output_dir"));
}

TEST_CASE("sha-256 digests match the reference vectors") {
    CHECK(sha256_hex("") ==
          "sha256:e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

    FileGuard file{temp_path("kanwit_test_digest.bin")};
    io::write_file_atomic(file.path, "abc");
    CHECK(digest_file(file.path) == sha256_hex("abc"));
    CHECK_THROWS((void)digest_file(temp_path("kanwit_no_such_file.bin")));
}

TEST_CASE("manifest records stages and detects tampering") {
    DirGuard dir{temp_path("kanwit_test_manifest_run")};
    fs::create_directories(fs::path(dir.path) / "data");
    io::write_file_atomic((fs::path(dir.path) / "data" / "x.csv").string(), "a,b\n1,2\n");

    RunManifest manifest(dir.path);
    manifest.begin();
    manifest.record_stage("gen-data", "{\"n\":100}", {"data/x.csv"}, 12);
    REQUIRE(manifest.stages().size() == 1);
    CHECK(manifest.stage("gen-data") != nullptr);
    CHECK(manifest.stage("gen-data")->wall_ms == 12);
    CHECK(manifest.stage("train") == nullptr);
    CHECK(manifest.verify().empty());

    // Reload from disk: same content, and the file is well-formed JSON.
    const RunManifest loaded = RunManifest::load(dir.path);
    REQUIRE(loaded.stages().size() == 1);
    CHECK(loaded.stages()[0].name == "gen-data");
    CHECK(loaded.stages()[0].config_json == "{\"n\":100}");
    REQUIRE(loaded.stages()[0].artifacts.size() == 1);
    CHECK(loaded.stages()[0].artifacts[0].digest == sha256_hex("a,b\n1,2\n"));
    const nlohmann::json doc = nlohmann::json::parse(
        io::read_file((fs::path(dir.path) / "manifest.json").string()));
    CHECK(doc.at("format") == "kanwit-manifest-v1");

    // Recording the same stage again replaces it.
    manifest.record_stage("gen-data", "{\"n\":100}", {"data/x.csv"}, 99);
    CHECK(manifest.stages().size() == 1);
    CHECK(manifest.stage("gen-data")->wall_ms == 99);

    // A modified artifact shows up in verification.
    io::write_file_atomic((fs::path(dir.path) / "data" / "x.csv").string(), "tampered\n");
    const std::vector<std::string> problems = RunManifest::load(dir.path).verify();
    REQUIRE(problems.size() == 1);
    CHECK(problems[0].find("data/x.csv") != std::string::npos);

    CHECK_THROWS((void)RunManifest::load(temp_path("kanwit_no_such_run")));
}

TEST_CASE("cli pipeline produces a complete, verified, reproducible run") {
    DirGuard dir{temp_path("kanwit_cli_run_a")};
    DirGuard twin{temp_path("kanwit_cli_run_b")};
    const std::string common = " --n 1200 --seed 3 --epochs 4 --batch-size 128";

    REQUIRE(run("gen-data --out " + dir.path + common) == 0);
    for (const char* rel : {"data/dataset.csv", "data/train.csv", "data/validation.csv",
                            "data/test.csv", "manifest.json"})
        CHECK(fs::exists(fs::path(dir.path) / rel));

    // Re-splitting with the same seed reproduces the split files exactly.
    const std::string train_csv = (fs::path(dir.path) / "data" / "train.csv").string();
    const std::string before = io::read_file(train_csv);
    REQUIRE(run("split --out " + dir.path + " --seed 3") == 0);
    CHECK(io::read_file(train_csv) == before);

    REQUIRE(run("train --out " + dir.path + common) == 0);
    CHECK(fs::exists(fs::path(dir.path) / "models" / "model.json"));
    const nlohmann::json report = nlohmann::json::parse(
        io::read_file((fs::path(dir.path) / "models" / "report.json").string()));
    CHECK(report.at("format") == "kanwit-report-v1");
    CHECK(report.at("accuracy").get<double>() >= 0.0);
    CHECK(report.at("rows") == 120);

    REQUIRE(run("evaluate --out " + dir.path) == 0);
    CHECK(fs::exists(fs::path(dir.path) / "models" / "evaluation.json"));

    REQUIRE(run("extract --out " + dir.path) == 0);
    CHECK(fs::exists(fs::path(dir.path) / "witness" / "witness.json"));
    const std::string rendered =
        io::read_file((fs::path(dir.path) / "witness" / "witness.txt").string());
    CHECK(!rendered.empty());

    const std::string model_json = (fs::path(dir.path) / "models" / "model.json").string();
    REQUIRE(run("eval-witness --out " + dir.path + " --model " + model_json) == 0);
    const nlohmann::json weval = nlohmann::json::parse(
        io::read_file((fs::path(dir.path) / "witness" / "evaluation.json").string()));
    CHECK(weval.at("format") == "kanwit-witness-eval-v1");
    CHECK(weval.at("model_agreement").get<double>() >= 0.0);

    REQUIRE(run("report --out " + dir.path) == 0);

    // An identical run in a fresh directory yields byte-identical datasets,
    // model, and witness.
    REQUIRE(run("gen-data --out " + twin.path + common) == 0);
    REQUIRE(run("train --out " + twin.path + common) == 0);
    REQUIRE(run("extract --out " + twin.path) == 0);
    for (const char* rel : {"data/dataset.csv", "models/model.json", "witness/witness.json"})
        CHECK(io::read_file((fs::path(dir.path) / rel).string()) ==
              io::read_file((fs::path(twin.path) / rel).string()));

    // Tampering with a recorded artifact turns the report into a failure.
    io::write_file_atomic((fs::path(dir.path) / "data" / "test.csv").string(), "junk\n");
    CHECK(run("report --out " + dir.path) == 3);
}

TEST_CASE("cli bootstrap stage writes rankings, counts, selections, and curve") {
    DirGuard dir{temp_path("kanwit_cli_run_boot")};
    REQUIRE(run("bootstrap --out " + dir.path +
                " --n 1200 --seed 11 --models 2 --epochs 2 --batch-size 128 --jobs 2") == 0);

    const nlohmann::json rankings = nlohmann::json::parse(
        io::read_file((fs::path(dir.path) / "ranking" / "rankings.json").string()));
    CHECK(rankings.at("format") == "kanwit-rankings-v1");
    CHECK(rankings.at("rankings").size() == 2);
    CHECK(rankings.at("failed_models").empty());

    const ranking::TopKFrequencyTable table =
        ranking::load_topk_table((fs::path(dir.path) / "ranking" / "topk_counts.csv").string());
    CHECK(table.n_models == 2);
    CHECK(table.k_max() == 8);
    for (int k = 0; k < table.k_max(); ++k)
        CHECK(table.counts.row(k).sum() == (k + 1) * table.n_models);

    const nlohmann::json selections = nlohmann::json::parse(
        io::read_file((fs::path(dir.path) / "ranking" / "selections.json").string()));
    CHECK(selections.at("selections").size() == 8);

    const std::string curve =
        io::read_file((fs::path(dir.path) / "ranking" / "curve.csv").string());
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 9);  // header + m = 1..8
}

TEST_CASE("cli maps usage, schema, and runtime failures to distinct exit codes") {
    DirGuard dir{temp_path("kanwit_cli_run_err")};

    CHECK(run("--help") == 0);
    CHECK(run("") == 2);            // a subcommand is required
    CHECK(run("frobnicate") == 2);  // unknown subcommand
    CHECK(run("gen-data --out " + dir.path + " --n notanumber") == 2);
    CHECK(run("gen-data --out " + dir.path + " --n 1") == 2);       // fails validation
    CHECK(run("gen-data --out " + dir.path + " --set bogus=1") == 2);
    CHECK(run("gen-data --out " + dir.path + " --set n900") == 2);  // missing '='
    CHECK(run("--profile warp gen-data --out " + dir.path) == 2);
    CHECK(run("--config " + temp_path("kanwit_no_such.cfg") + " gen-data") == 2);

    FileGuard bad{temp_path("kanwit_bad_config.cfg")};
    io::write_file_atomic(bad.path, "epochs: 12\n");
    CHECK(run("--config " + bad.path + " gen-data --out " + dir.path) == 2);

    // Missing input files are configuration errors, not runtime failures.
    CHECK(run("train --out " + dir.path) == 2);
    CHECK(run("report --out " + dir.path) == 2);
    CHECK(run("extract --out " + dir.path) == 2);

    // A diverging optimization is a runtime failure.
    REQUIRE(run("gen-data --out " + dir.path + " --n 600 --seed 2") == 0);
    CHECK(run("train --out " + dir.path +
              " --epochs 1 --batch-size 128 --learning-rate 1e308") == 3);
}

TEST_CASE("cli precedence: config file < --set < flags") {
    DirGuard dir{temp_path("kanwit_cli_run_prec")};
    FileGuard file{temp_path("kanwit_prec_config.cfg")};
    io::write_file_atomic(file.path, "n=700\nseed=5\nepochs=3\nbatch_size=128\n");

    REQUIRE(run("--config " + file.path + " --set n=900 gen-data --out " + dir.path +
                " --n 1200") == 0);
    const RunManifest manifest = RunManifest::load(dir.path);
    REQUIRE(manifest.stage("gen-data") != nullptr);
    const nlohmann::json snapshot =
        nlohmann::json::parse(manifest.stage("gen-data")->config_json);
    CHECK(snapshot.at("n") == 1200);   // flag beat --set beat file
    CHECK(snapshot.at("seed") == 5);   // file value survived untouched
    const dataset::Dataset data =
        dataset::load_dataset((fs::path(dir.path) / "data" / "dataset.csv").string());
    CHECK(data.rows() == 1200);
}
