#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "samadapter/image.hpp"
#include "samadapter/task.hpp"

namespace samadapter {

struct SampleRecord {
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  std::string stem;
  std::string source;  // detected dataset name, or the root's folder name
  Task task = Task::camouflage;
  Split split = Split::train;
};

/// Folder names inside each dataset root.
struct FolderLayout {
  std::string image_dir = "images";
  std::string mask_dir = "masks";
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::vector<std::string> source_datasets;
  int resize_to = 64;
  std::vector<std::string> warnings;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

/// Known public datasets recognised from a root's path components.
std::optional<std::string> detect_dataset(const std::filesystem::path& root);
/// Published split size for a known dataset, if any.
std::optional<std::size_t> expected_count(const std::string& dataset, Split split);

/// Pairs images with masks (same stem) under every root, in root order and
/// lexicographic stem order within a root. Does not decode any file. For the
/// camouflage task COD10K roots keep only camouflaged ("-CAM-") samples.
/// Throws IoError when a mask is missing (listing every stem) and
/// ValidationError on duplicate stems.
DatasetManifest build_manifest(const std::vector<std::filesystem::path>& roots, Task task, Split split,
                               int resize_to = 64, const FolderLayout& layout = {});

struct Sample {
  std::string stem;
  ImageTensor image;
  BinaryMask mask;
};

/// Image bilinearly resized to resize_to^2 in [0, 1] with 3 channels; mask
/// nearest-resized and thresholded at 0.5.
Sample load_sample(const SampleRecord& record, int resize_to);

/// Mirrors image and mask left-right.
Sample hflip(const Sample& sample);

}  // namespace samadapter
