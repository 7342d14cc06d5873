#pragma once

// Binary artifact container shared by the .hsc, .fpca, .post and .vparams
// formats: one line of compact JSON terminated by '\n', followed by a raw
// little-endian payload. The header always carries "payload_bytes".

#include <bit>
#include <cstddef>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsbnn/error.hpp"

namespace hsbnn {

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

using json = nlohmann::json;

struct Container {
  json header;
  std::vector<std::byte> payload;
};

void write_container(const std::filesystem::path& path, json header,
                     std::span<const std::byte> payload);

Container read_container(const std::filesystem::path& path);

/// Appends the raw bytes of `values` to `out`.
template <typename T>
void append_payload(std::vector<std::byte>& out, std::span<const T> values) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* p = reinterpret_cast<const std::byte*>(values.data());
  out.insert(out.end(), p, p + values.size_bytes());
}

/// Sequential typed reader over a payload.
class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename T>
  void read(std::span<T> out) {
    static_assert(std::is_trivially_copyable_v<T>);
    const std::size_t n = out.size_bytes();
    if (offset_ + n > bytes_.size()) throw IoError("payload truncated");
    std::memcpy(out.data(), bytes_.data() + offset_, n);
    offset_ += n;
  }

  template <typename T>
  std::vector<T> read(std::size_t count) {
    std::vector<T> v(count);
    read(std::span<T>(v));
    return v;
  }

  bool exhausted() const noexcept { return offset_ == bytes_.size(); }

 private:
  std::span<const std::byte> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace hsbnn
