#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rpo {

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers see
// either the old or the new content.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

}  // namespace rpo
