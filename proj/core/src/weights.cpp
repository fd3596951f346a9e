#include "samadapter/weights.hpp"

#include <array>
#include <map>
#include <utility>

#include <spdlog/spdlog.h>

#include "samadapter/error.hpp"

namespace samadapter {

namespace {

// Official SAM prefix -> internal prefix.
constexpr std::array<std::pair<const char*, const char*>, 3> kNameTable{{
    {"image_encoder.patch_embed.", "encoder.patch_embed."},
    {"image_encoder.pos_embed", "encoder.pos_embed"},
    {"image_encoder.blocks.", "encoder.blocks."},
}};

}  // namespace

std::optional<std::string> map_checkpoint_name(const std::string& name) {
  if (name.starts_with("encoder.") || name.starts_with("decoder.")) return name;
  for (const auto& [official, internal] : kNameTable) {
    if (name.starts_with(official)) return std::string(internal) + name.substr(std::string(official).size());
  }
  return std::nullopt;
}

PretrainedBackbone load_pretrained(const EncoderConfig& encoder_config, const DecoderConfig& decoder_config,
                                   const std::filesystem::path& weight_file, std::uint64_t decoder_seed) {
  const TensorArchive archive = TensorArchive::load(weight_file);
  PretrainedBackbone out{Encoder(encoder_config), Decoder(decoder_config), {}};
  out.decoder.init_random(decoder_seed);

  std::map<std::string, const ArchiveTensor*> by_internal;
  for (const auto& [name, tensor] : archive.tensors()) {
    if (auto mapped = map_checkpoint_name(name)) {
      by_internal[*mapped] = &tensor;
    } else {
      out.report.extra.push_back(name);
    }
  }

  std::vector<std::string> mismatched;
  std::vector<std::string> missing_encoder;
  auto load_into = [&](Param& p, bool required) {
    auto it = by_internal.find(p.name);
    if (it == by_internal.end()) {
      out.report.missing.push_back(p.name);
      if (required) missing_encoder.push_back(p.name);
      return;
    }
    if (!assign_param(p, *it->second)) {
      mismatched.push_back(p.name + " (file " + shape_str(it->second->shape) + ", model " + shape_str(p.shape) + ")");
    } else {
      ++out.report.loaded;
    }
    by_internal.erase(it);
  };
  out.encoder.visit([&](Param& p) { load_into(p, true); });
  out.decoder.visit([&](Param& p) { load_into(p, false); });
  for (const auto& [name, _] : by_internal) out.report.extra.push_back(name);

  if (!mismatched.empty()) {
    std::string msg = "shape mismatch in " + weight_file.string() + ":";
    for (const auto& m : mismatched) msg += " " + m;
    throw LoadError(msg, mismatched);
  }
  if (!missing_encoder.empty()) {
    std::string msg = "encoder tensors missing from " + weight_file.string() + ":";
    for (const auto& m : missing_encoder) msg += " " + m;
    throw LoadError(msg, missing_encoder);
  }
  if (!out.report.missing.empty()) {
    spdlog::warn("{} decoder tensors not in {}; keeping seeded init", out.report.missing.size(), weight_file.string());
  }
  if (!out.report.extra.empty()) {
    spdlog::info("{} tensors in {} are not used by the model", out.report.extra.size(), weight_file.string());
  }
  return out;
}

void save_pretrained(const Encoder& encoder, const Decoder& decoder, const std::filesystem::path& weight_file) {
  TensorArchive archive;
  encoder.visit([&](const Param& p) { archive.put(p, DType::f32); });
  decoder.visit([&](const Param& p) { archive.put(p, DType::f32); });
  archive.save(weight_file);
}

}  // namespace samadapter
