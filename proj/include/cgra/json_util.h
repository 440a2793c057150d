#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace cgra {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

// Parse errors are rethrown as ParseError carrying the 1-based line.
nlohmann::json parse_json_text(std::string_view text, const std::string& source);
nlohmann::json parse_json_file(const std::filesystem::path& path);

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace cgra
