#pragma once

// Private on-disk container shared by every file format in the library:
//   line 1: compact JSON header terminated by '\n'
//   rest:   little-endian binary payload
// The header always carries "format" and "version".

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ota::detail {

struct Container {
  nlohmann::json header;
  std::vector<unsigned char> payload;
};

void write_container(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const unsigned char> payload);

/// Reads and validates format name and version. Payload size is checked by the caller.
Container read_container(const std::filesystem::path& path, const std::string& format, int version);

void append_f32(std::vector<unsigned char>& out, double v);
void append_f64(std::vector<unsigned char>& out, double v);
float read_f32(std::span<const unsigned char> bytes, std::size_t index);
double read_f64(std::span<const unsigned char> bytes, std::size_t index);

}  // namespace ota::detail
