#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace lwnd {

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace lwnd
