#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sse {

enum class ErrorCode {
  EmptySignal,
  UnsupportedRate,
  SignalTooShort,
  InvalidRange,
  ShapeMismatch,
  NotEnoughData,
  InvalidShift,
  InvalidFactor,
  InvalidDecay,
  CacheMismatch,
  ModelLoadError,
  InvalidId,
  TrackTooShort,
  EmptySplit,
  InvalidConfig,
  InvalidEmbedding,
  DivergenceError,
  UndefinedAP,
  UnknownAnnotation,
  ModelNotFitted,
  DuplicateRecord,
  EmptyIndex,
  QueryTooShort,
  IndexLoadError,
  FingerprintMismatch,
  AudioFormatError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySignal: return "empty_signal";
    case ErrorCode::UnsupportedRate: return "unsupported_rate";
    case ErrorCode::SignalTooShort: return "signal_too_short";
    case ErrorCode::InvalidRange: return "invalid_range";
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::NotEnoughData: return "not_enough_data";
    case ErrorCode::InvalidShift: return "invalid_shift";
    case ErrorCode::InvalidFactor: return "invalid_factor";
    case ErrorCode::InvalidDecay: return "invalid_decay";
    case ErrorCode::CacheMismatch: return "cache_mismatch";
    case ErrorCode::ModelLoadError: return "model_load_error";
    case ErrorCode::InvalidId: return "invalid_id";
    case ErrorCode::TrackTooShort: return "track_too_short";
    case ErrorCode::EmptySplit: return "empty_split";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::InvalidEmbedding: return "invalid_embedding";
    case ErrorCode::DivergenceError: return "divergence";
    case ErrorCode::UndefinedAP: return "undefined_ap";
    case ErrorCode::UnknownAnnotation: return "unknown_annotation";
    case ErrorCode::ModelNotFitted: return "model_not_fitted";
    case ErrorCode::DuplicateRecord: return "duplicate_record";
    case ErrorCode::EmptyIndex: return "empty_index";
    case ErrorCode::QueryTooShort: return "query_too_short";
    case ErrorCode::IndexLoadError: return "index_load_error";
    case ErrorCode::FingerprintMismatch: return "fingerprint_mismatch";
    case ErrorCode::AudioFormatError: return "audio_format_error";
    case ErrorCode::IoError: return "io_error";
  }
  return "unknown";
}

/// Every failure in the library surfaces as an Error carrying a typed code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace sse
