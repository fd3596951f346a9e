#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace samadapter::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kConfigError = 2;

/// Parses argv (argv[0] is the program name) and runs one subcommand.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

struct TrainArgs {
  std::filesystem::path config;
  bool deterministic = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool overwrite = false;
  bool force = false;
  std::filesystem::path resume;
};
int cmd_train(const TrainArgs& args);

struct EvalArgs {
  std::filesystem::path pred_dir;
  std::filesystem::path gt_dir;
  std::string task;
  std::filesystem::path out;  // default: <pred_dir>/metrics_report.json
  bool allow_missing = false;
  bool overwrite = false;
};
int cmd_eval(const EvalArgs& args);

struct PredictArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::filesystem::path out_dir;
  std::filesystem::path config;  // default: the snapshot stored in the checkpoint
  bool deterministic = false;
  bool overwrite = false;
};
int cmd_predict(const PredictArgs& args);

struct ExtractArgs {
  std::filesystem::path config;
  std::filesystem::path input;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint;  // optional; adapters at init otherwise
  bool overwrite = false;
};
int cmd_extract_prompts(const ExtractArgs& args);

struct ReportArgs {
  std::filesystem::path log;
  std::filesystem::path out_dir;
  bool overwrite = false;
};
int cmd_report(const ReportArgs& args);

}  // namespace samadapter::cli
