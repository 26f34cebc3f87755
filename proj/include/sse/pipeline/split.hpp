#pragma once

#include <string>
#include <string_view>

#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"

namespace sse::pipeline {

enum class Split { Train, Validation, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation" || s == "val") return Split::Validation;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::InvalidConfig, "unknown split '" + std::string(s) + "'");
}

/// FNV-1a 64 of the raw id bytes, bucket = hash mod 100: [0, 80) train,
/// [80, 90) validation, [90, 100) test.
inline Split assign_split(std::string_view track_id) {
  require(!track_id.empty(), ErrorCode::InvalidId, "track id must be non-empty");
  const auto bucket = fnv1a64(track_id) % 100;
  if (bucket < 80) return Split::Train;
  if (bucket < 90) return Split::Validation;
  return Split::Test;
}

}  // namespace sse::pipeline
