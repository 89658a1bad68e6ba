#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polyglot::io {

void append_f64_le(std::string& out, std::span<const double> values);
// Reads `count` doubles starting at `offset`; throws if the buffer is short.
std::vector<double> read_f64_le(std::string_view bytes, std::size_t offset, std::size_t count);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see partial output.
void write_file(const std::filesystem::path& path, std::string_view contents);

// Hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view text);

}  // namespace polyglot::io
