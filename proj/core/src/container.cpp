#include "container.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "ota/error.hpp"

namespace ota::detail {

void write_container(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const unsigned char> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::string text = header.dump();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, const std::string& format, int version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CorruptFileError(path.string() + ": missing header line");
  Container c;
  try {
    c.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(path.string() + ": header is not valid JSON (" + e.what() + ")");
  }
  if (!c.header.is_object() || !c.header.contains("format") || !c.header.contains("version"))
    throw CorruptFileError(path.string() + ": header lacks format/version");
  if (c.header["format"] != format)
    throw CorruptFileError(path.string() + ": expected format '" + format + "', found " + c.header["format"].dump());
  if (!c.header["version"].is_number_integer() || c.header["version"].get<int>() != version)
    throw FormatVersionError(path.string() + ": unsupported " + format + " version " + c.header["version"].dump());
  c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return c;
}

namespace {
template <typename U>
void append_le(std::vector<unsigned char>& out, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFF));
}
template <typename U>
U read_le(std::span<const unsigned char> bytes, std::size_t offset) {
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(bytes[offset + b]) << (8 * b);
  return bits;
}
}  // namespace

void append_f32(std::vector<unsigned char>& out, double v) {
  append_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}
void append_f64(std::vector<unsigned char>& out, double v) { append_le(out, std::bit_cast<std::uint64_t>(v)); }
float read_f32(std::span<const unsigned char> bytes, std::size_t index) {
  return std::bit_cast<float>(read_le<std::uint32_t>(bytes, 4 * index));
}
double read_f64(std::span<const unsigned char> bytes, std::size_t index) {
  return std::bit_cast<double>(read_le<std::uint64_t>(bytes, 8 * index));
}

}  // namespace ota::detail
