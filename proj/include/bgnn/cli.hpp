#pragma once

#include <map>
#include <string>

#include "bgnn/trainer.hpp"

namespace bgnn::cli {

// File/flag surface of a run: dataset locations and the output directory,
// alongside the full TrainConfig.
struct RunPaths {
  std::string data;
  std::string val_data;
  std::string out = "run";
};

// Plain key=value config files. Unknown keys are rejected; '#' starts a
// comment line. write_config_echo emits every key, so re-feeding the echo
// reproduces the run.
std::map<std::string, std::string> read_config_file(const std::string& path);
void apply_config(const std::map<std::string, std::string>& kv, train::TrainConfig& cfg,
                  RunPaths& paths);
std::string config_echo(const train::TrainConfig& cfg, const RunPaths& paths);

// Metrics JSON-lines -> tidy CSV (iter,split,metric,value); scalar numeric
// fields only. Malformed lines raise parse errors with their line number.
void export_plot(const std::string& metrics_path, const std::string& out_path);

// Entry point; returns the process exit code: 0 success, 1 usage error,
// 2 runtime error.
int run(int argc, const char* const* argv);

}  // namespace bgnn::cli
