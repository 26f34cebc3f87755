#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sse/core/binary_io.hpp"

namespace sse {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error(ErrorCode::IoError, "SHA-256 computation failed");
  }
  return out;
}

inline Digest sha256_file(const std::filesystem::path& path, ErrorCode on_error) {
  return sha256(read_file_bytes(path, on_error));
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

/// Appends the SHA-256 of `bytes` as a 32-byte trailer.
inline std::vector<std::uint8_t> seal(std::vector<std::uint8_t> bytes) {
  const auto d = sha256(bytes);
  bytes.insert(bytes.end(), d.begin(), d.end());
  return bytes;
}

/// The payload of a sealed buffer; a missing or wrong trailer throws Error(code).
inline std::span<const std::uint8_t> unseal(std::span<const std::uint8_t> bytes, ErrorCode code) {
  if (bytes.size() < 32) throw Error(code, "file too short to hold its checksum");
  const auto payload = bytes.first(bytes.size() - 32);
  const auto d = sha256(payload);
  if (!std::equal(d.begin(), d.end(), bytes.end() - 32)) throw Error(code, "checksum mismatch, file is corrupt");
  return payload;
}

}  // namespace sse
