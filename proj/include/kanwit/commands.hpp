#pragma once

#include <string>

#include "kanwit/runconfig.hpp"

namespace kanwit::cli {

// Per-stage entry points.  Each validates its inputs, writes its artifacts
// under config.output_dir (write-to-temp + rename), records a manifest stage,
// and prints a one-line summary.  Paths given as "" fall back to the stage's
// default location inside the run directory.

void cmd_gen_data(const RunConfig& config);
void cmd_split(const RunConfig& config, const std::string& input_csv);
void cmd_train(const RunConfig& config, const std::string& train_csv,
               const std::string& validation_csv, const std::string& test_csv);
void cmd_evaluate(const RunConfig& config, const std::string& model_path,
                  const std::string& data_csv);
void cmd_bootstrap(const RunConfig& config);
void cmd_extract(const RunConfig& config, const std::string& model_path,
                 const std::string& probe_csv);
void cmd_eval_witness(const RunConfig& config, const std::string& witness_path,
                      const std::string& data_csv, const std::string& model_path);

// Verifies every artifact digest in the manifest; returns the number of
// problems found (0 = clean) after printing them.
int cmd_report(const RunConfig& config);

// Full argument parsing + dispatch; returns the process exit code
// (0 success, 2 usage/config error, 3 runtime/training error).
int run_cli(int argc, const char* const* argv);

}  // namespace kanwit::cli
