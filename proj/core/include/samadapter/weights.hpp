#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "samadapter/archive.hpp"
#include "samadapter/backbone.hpp"

namespace samadapter {

/// Maps an official SAM checkpoint tensor name ("image_encoder.blocks.3...")
/// to the internal name ("encoder.blocks.3..."). Internal names map to
/// themselves; names without a counterpart (neck, prompt encoder, SAM's
/// two-way decoder) return nullopt.
std::optional<std::string> map_checkpoint_name(const std::string& name);

struct LoadReport {
  std::size_t loaded = 0;
  std::vector<std::string> missing;  // model tensors absent from the file
  std::vector<std::string> extra;    // file tensors the model does not use
};

struct PretrainedBackbone {
  Encoder encoder;
  Decoder decoder;
  LoadReport report;
};

/// Loads encoder (frozen) and decoder (trainable) weights. Shape mismatches
/// and missing encoder tensors raise LoadError naming every offending
/// tensor; missing decoder tensors keep the seeded initialisation and are
/// reported.
PretrainedBackbone load_pretrained(const EncoderConfig& encoder_config, const DecoderConfig& decoder_config,
                                   const std::filesystem::path& weight_file, std::uint64_t decoder_seed = 0);

/// Writes encoder and decoder tensors as float32 under internal names.
void save_pretrained(const Encoder& encoder, const Decoder& decoder, const std::filesystem::path& weight_file);

}  // namespace samadapter
