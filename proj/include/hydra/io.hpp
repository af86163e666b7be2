#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hydra::io {

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace hydra::io
