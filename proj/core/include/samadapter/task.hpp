#pragma once

#include <string>
#include <string_view>

namespace samadapter {

enum class Task { camouflage, shadow, polyp };
enum class Split { train, test };

Task parse_task(std::string_view name);
std::string to_string(Task task);
Split parse_split(std::string_view name);
std::string to_string(Split split);

}  // namespace samadapter
