#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace chartinstruct {

// Throws Error(FileUnreadable).
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it into place, so readers never
// observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Non-empty lines of a JSON Lines file, with 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> read_jsonl_lines(const std::filesystem::path& path);

}  // namespace chartinstruct
