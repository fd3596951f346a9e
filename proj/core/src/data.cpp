#include "samadapter/data.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "samadapter/error.hpp"
#include "samadapter/files.hpp"

namespace samadapter {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct KnownCount {
  const char* dataset;
  Split split;
  std::size_t count;
};

// Camouflage counts for COD10K are the camouflaged subset.
constexpr KnownCount kKnownCounts[] = {
    {"COD10K", Split::train, 3040}, {"COD10K", Split::test, 2026}, {"CAMO", Split::train, 1000},
    {"CAMO", Split::test, 250},     {"CHAMELEON", Split::test, 76}, {"ISTD", Split::train, 1330},
    {"ISTD", Split::test, 540},
};

}  // namespace

std::optional<std::string> detect_dataset(const fs::path& root) {
  for (auto it = root.end(); it != root.begin();) {
    --it;
    const std::string part = lower(it->string());
    if (part.find("cod10k") != std::string::npos) return "COD10K";
    if (part.find("chameleon") != std::string::npos) return "CHAMELEON";
    if (part.find("camo") != std::string::npos) return "CAMO";
    if (part.find("istd") != std::string::npos) return "ISTD";
    if (part.find("kvasir") != std::string::npos) return "Kvasir-SEG";
  }
  return std::nullopt;
}

std::optional<std::size_t> expected_count(const std::string& dataset, Split split) {
  for (const auto& k : kKnownCounts)
    if (dataset == k.dataset && split == k.split) return k.count;
  return std::nullopt;
}

DatasetManifest build_manifest(const std::vector<fs::path>& roots, Task task, Split split, int resize_to,
                               const FolderLayout& layout) {
  if (roots.empty()) throw ValidationError("build_manifest needs at least one dataset root");
  if (resize_to <= 0) throw ValidationError("resize_to must be positive");
  DatasetManifest manifest;
  manifest.resize_to = resize_to;
  std::set<std::string> seen;
  std::vector<std::string> duplicates;

  for (const auto& root : roots) {
    const fs::path image_dir = root / layout.image_dir;
    const fs::path mask_dir = root / layout.mask_dir;
    if (!fs::is_directory(image_dir)) throw IoError(image_dir.string(), "image folder not found");
    if (!fs::is_directory(mask_dir)) throw IoError(mask_dir.string(), "mask folder not found");

    const auto detected = detect_dataset(root);
    const std::string source = detected.value_or(root.filename().empty() ? root.parent_path().filename().string()
                                                                         : root.filename().string());
    const auto images = images_by_stem(image_dir);
    const auto masks = images_by_stem(mask_dir);

    std::vector<std::string> missing;
    std::size_t kept = 0;
    for (const auto& [stem, image_path] : images) {
      if (task == Task::camouflage && detected == "COD10K" && stem.find("-NonCAM-") != std::string::npos) continue;
      auto m = masks.find(stem);
      if (m == masks.end()) {
        missing.push_back(stem);
        continue;
      }
      if (!seen.insert(stem).second) duplicates.push_back(stem);
      manifest.records.push_back(SampleRecord{image_path, m->second, stem, source, task, split});
      ++kept;
    }
    if (!missing.empty()) {
      std::string msg = "missing masks for stems:";
      for (const auto& s : missing) msg += " " + s;
      throw IoError(mask_dir.string(), msg);
    }
    if (detected) {
      if (auto want = expected_count(*detected, split); want && *want != kept) {
        std::string w = *detected + " " + to_string(split) + ": found " + std::to_string(kept) +
                        " samples, published split has " + std::to_string(*want);
        spdlog::warn("{}", w);
        manifest.warnings.push_back(std::move(w));
      }
    }
    manifest.source_datasets.push_back(source);
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate stems within split:";
    for (const auto& s : duplicates) msg += " " + s;
    throw ValidationError(msg);
  }
  return manifest;
}

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["resize_to"] = resize_to;
  j["source_datasets"] = source_datasets;
  j["warnings"] = warnings;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    j["records"].push_back({{"stem", r.stem},
                            {"image_path", r.image_path.generic_string()},
                            {"mask_path", r.mask_path.generic_string()},
                            {"source", r.source},
                            {"task", to_string(r.task)},
                            {"split", to_string(r.split)}});
  }
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DatasetManifest m;
  m.resize_to = j.at("resize_to").get<int>();
  m.source_datasets = j.at("source_datasets").get<std::vector<std::string>>();
  m.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& r : j.at("records")) {
    m.records.push_back(SampleRecord{r.at("image_path").get<std::string>(), r.at("mask_path").get<std::string>(),
                                     r.at("stem").get<std::string>(), r.at("source").get<std::string>(),
                                     parse_task(r.at("task").get<std::string>()),
                                     parse_split(r.at("split").get<std::string>())});
  }
  return m;
}

Sample load_sample(const SampleRecord& record, int resize_to) {
  if (resize_to <= 0) throw ValidationError("resize_to must be positive");
  Sample s;
  s.stem = record.stem;
  s.image = resize_bilinear(read_image_rgb(record.image_path), resize_to, resize_to);
  const BinaryMask raw = read_mask(record.mask_path);
  s.mask = BinaryMask::threshold(resize_nearest(raw.values, resize_to, resize_to), 0.5);
  if (s.mask.values.sum() == 0.0 || s.mask.values.sum() == static_cast<double>(s.mask.values.size())) {
    spdlog::debug("mask {} is single-class after resizing", record.mask_path.string());
  }
  return s;
}

Sample hflip(const Sample& sample) {
  Sample out = sample;
  const int w = sample.image.width();
  for (int y = 0; y < sample.image.height(); ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < sample.image.channels(); ++c) out.image.at(y, x, c) = sample.image.at(y, w - 1 - x, c);
  out.mask.values = sample.mask.values.rowwise().reverse();
  return out;
}

}  // namespace samadapter
