#pragma once

#include <filesystem>
#include <string>

namespace axir {

/// Git blob id: hex SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace axir
