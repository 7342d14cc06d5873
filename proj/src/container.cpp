#include "hsbnn/container.hpp"

#include <fstream>
#include <iterator>

namespace hsbnn {

void write_container(const std::filesystem::path& path, json header,
                     std::span<const std::byte> payload) {
  header["payload_bytes"] = payload.size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::string line = header.dump();
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing header: " + path.string());
  Container c;
  try {
    c.header = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("malformed header in " + path.string() + ": " + e.what());
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto expected = c.header.value("payload_bytes", std::size_t{0});
  if (raw.size() != expected) {
    throw IoError(path.string() + ": payload is " + std::to_string(raw.size()) +
                  " bytes, header says " + std::to_string(expected));
  }
  c.payload.resize(raw.size());
  std::memcpy(c.payload.data(), raw.data(), raw.size());
  return c;
}

}  // namespace hsbnn
