#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "samadapter/adapter.hpp"
#include "samadapter/backbone.hpp"
#include "samadapter/data.hpp"
#include "samadapter/model.hpp"
#include "samadapter/trainer.hpp"

namespace samadapter {

/// Environment variable that relocates relative output directories.
inline constexpr const char* kOutputRootEnv = "SAM_ADAPTER_OUTPUT_ROOT";

struct RunConfig {
  Task task = Task::camouflage;
  std::vector<std::filesystem::path> train_roots;
  std::vector<std::filesystem::path> test_roots;  // empty: evaluate on train_roots
  FolderLayout layout;
  int resize_to = 64;

  std::string preset = "toy_small";
  std::optional<std::filesystem::path> weights;  // pretrained file; seeded init when absent
  std::uint64_t model_seed = 0;
  bool adapters_enabled = true;

  int adapter_mid_dim = 32;
  AdapterInit adapter_init = AdapterInit::zero_up;
  std::uint64_t adapter_seed = 0;

  PromptSettings prompt;
  TrainConfig train;

  std::filesystem::path output_dir = "runs/default";

  /// Relative paths resolve against base_dir. Missing fields take task
  /// defaults. Throws ConfigError naming the field.
  static RunConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  /// Fully resolved config with absolute paths; from_json(to_json()) is the
  /// identity.
  std::string to_json() const;

  /// Checks value ranges, preset/adapter consistency and that every
  /// referenced path exists.
  void validate() const;

  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
  AdapterConfig adapter_config() const;
};

/// Output dir after applying the output-root environment override.
std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

/// Frozen encoder (pretrained or seeded), decoder, adapters and HFC
/// projection as the config describes.
SamAdapterModel build_model(const RunConfig& config);

AdapterInit parse_adapter_init(std::string_view name);
std::string to_string(AdapterInit init);

}  // namespace samadapter
