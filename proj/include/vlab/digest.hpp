#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace vlab
{

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's contents, streamed.
std::string sha256_hex_file(const std::filesystem::path & path);

bool is_sha256_hex(std::string_view text);

/// Whole-file read; throws std::runtime_error on I/O failure.
std::string read_file(const std::filesystem::path & path);
void write_file(const std::filesystem::path & path, std::string_view bytes);

}  // namespace vlab
