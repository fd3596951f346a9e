#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace samadapter {

bool is_image_file(const std::filesystem::path& path);

/// Image files of a directory keyed by stem (sorted). When several files
/// share a stem the PNG wins, otherwise the lexicographically first path.
std::map<std::string, std::filesystem::path> images_by_stem(const std::filesystem::path& dir);

}  // namespace samadapter
