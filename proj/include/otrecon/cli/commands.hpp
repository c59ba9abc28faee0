#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otrecon/cli/config.hpp"
#include "otrecon/training.hpp"

namespace otrecon::cli {

// Per-command schemas; unknown config keys fail resolution.
Schema generate_schema();
Schema train_schema();
Schema eval_schema();
Schema prop1_schema();
Schema prop2_schema();
Schema metric_check_schema();
Schema selftest_schema();

// Shared construction of the training/evaluation setup from a resolved config.
training::TrainConfig train_config_from(const Resolved& r);

// Commands throw ContractError/ConfigError (CLI exit 1) or NumericalBreakdown
// (exit 2). Each writes a run manifest plus a replayable config.resolved into
// its output directory.
void cmd_generate(const Config& cfg, const std::string& out_dir);
void cmd_train(const Config& cfg, const std::string& out_dir,
               const std::optional<std::string>& resume_checkpoint);
void cmd_eval(const Config& cfg, const std::string& out_dir,
              const std::vector<std::string>& checkpoints);
void cmd_prop1(const Config& cfg, const std::string& out_dir);
void cmd_prop2(const Config& cfg, const std::string& out_dir);
void cmd_metric_check(const Config& cfg, const std::string& out_dir);

// Runs the built-in verification suites; returns false on any failure.
// Appends one line per suite to `report`.
bool selftest(const Config& cfg, std::string& report);
void write_selftest_outputs(const Config& cfg, const std::string& report,
                            const std::string& out_dir);
void cmd_selftest(const Config& cfg, const std::optional<std::string>& out_dir);

int run_cli(int argc, char** argv);

} // namespace otrecon::cli
