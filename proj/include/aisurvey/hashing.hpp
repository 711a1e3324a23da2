#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace aisurvey {

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);

// Git blob id: SHA-1 over "blob <size>\0" followed by the file content.
std::string git_blob_hash(const std::filesystem::path& file);

}  // namespace aisurvey
