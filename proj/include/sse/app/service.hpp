#pragma once

// HTTP search service. Handlers are plain methods returning a status, content
// type and body so they can be exercised without a socket; `mount` wires them
// into an httplib server.

#include <charconv>
#include <optional>
#include <string>

#include <json.hpp>

#include "sse/app/config.hpp"
#include "sse/core/sha256.hpp"
#include "sse/dsp/resample.hpp"
#include "sse/dsp/wav.hpp"
#include "sse/index/index.hpp"
#include "sse/nn/model_io.hpp"
#include "sse/pipeline/catalog.hpp"
#include "sse/pipeline/clips.hpp"
#include "sse/pipeline/split.hpp"

// After the Eigen-based headers: <resolv.h>, pulled in by httplib, defines
// a `_res` macro that collides with Eigen parameter names.
#include <httplib.h>

namespace sse::app {

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline HttpReply error_reply(int status, std::string_view code, const std::string& message) {
  return {status, "application/json", nlohmann::json{{"error", message}, {"code", code}}.dump()};
}

inline HttpReply json_reply(const nlohmann::json& j) { return {200, "application/json", j.dump()}; }

/// Status and code for a library error raised while serving a request.
inline HttpReply reply_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::QueryTooShort:
    case ErrorCode::SignalTooShort:
    case ErrorCode::TrackTooShort: return error_reply(422, "query_too_short", e.what());
    case ErrorCode::InvalidId: return error_reply(404, "unknown_track", e.what());
    case ErrorCode::AudioFormatError:
    case ErrorCode::UnsupportedRate:
    case ErrorCode::EmptySignal:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidRange: return error_reply(400, to_string(e.code()), e.what());
    default: return error_reply(500, to_string(e.code()), e.what());
  }
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Owns an immutable model and index; every handler is const and safe to
/// call concurrently.
class SearchService {
 public:
  SearchService(pipeline::Catalog catalog, nn::EncoderModel<float> model, index::EmbeddingIndex index,
                ServiceConfig config = {})
      : catalog_(std::move(catalog)),
        model_(std::move(model)),
        index_(std::move(index)),
        config_(std::move(config)),
        fingerprint_(nn::model_fingerprint(model_)) {
    require(!index_.empty(), ErrorCode::EmptyIndex, "the service needs a non-empty index");
    require(index_.fingerprint() == fingerprint_, ErrorCode::FingerprintMismatch,
            "index was built by model " + to_hex(index_.fingerprint()) + ", serving " + to_hex(fingerprint_));
  }

  const ServiceConfig& config() const { return config_; }

  HttpReply health() const {
    return json_reply({{"status", "ok"}, {"model_fingerprint", to_hex(fingerprint_)}, {"index_size", index_.size()}});
  }

  /// Empty split lists every track.
  HttpReply tracks(const std::string& split) const {
    std::optional<pipeline::Split> only;
    if (!split.empty()) {
      try {
        only = pipeline::parse_split(split);
      } catch (const Error& e) {
        return error_reply(400, "bad_request", e.what());
      }
    }
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : catalog_.tracks()) {
      const auto s = pipeline::assign_split(t.track_id);
      if (only && s != *only) continue;
      list.push_back({{"track_id", t.track_id},
                      {"genre", t.genre},
                      {"mood", t.mood},
                      {"duration_s", t.duration_s},
                      {"split", pipeline::to_string(s)}});
    }
    return json_reply({{"tracks", list}});
  }

  /// {"catalog_clip": {"track_id", "offset"}, "k", "exclude_track"}
  HttpReply search_json(const std::string& body) const {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      return error_reply(400, "bad_request", std::string("malformed JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("catalog_clip") || !req["catalog_clip"].is_object()) {
      return error_reply(400, "bad_request", "request needs a catalog_clip object");
    }
    const auto& clip = req["catalog_clip"];
    if (!clip.contains("track_id") || !clip["track_id"].is_string()) {
      return error_reply(400, "bad_request", "catalog_clip.track_id must be a string");
    }
    double offset = 0.0;
    if (clip.contains("offset")) {
      if (!clip["offset"].is_number()) return error_reply(400, "bad_request", "catalog_clip.offset must be a number");
      offset = clip["offset"].get<double>();
    }
    std::size_t k = config_.default_k;
    if (req.contains("k")) {
      if (!req["k"].is_number_integer()) return error_reply(400, "bad_request", "k must be an integer");
      const auto v = req["k"].get<long long>();
      if (v < 1 || v > static_cast<long long>(config_.max_k)) return bad_k();
      k = static_cast<std::size_t>(v);
    }
    std::optional<std::string> exclude;
    if (req.contains("exclude_track") && !req["exclude_track"].is_null()) {
      if (!req["exclude_track"].is_string()) return error_reply(400, "bad_request", "exclude_track must be a string");
      exclude = req["exclude_track"].get<std::string>();
    }

    const auto id = clip["track_id"].get<std::string>();
    const auto* track = catalog_.find(id);
    if (track == nullptr) return error_reply(404, "unknown_track", "unknown track " + id);
    const double window_s = static_cast<double>(model_.arch.clip_samples) / dsp::kModelSampleRate;
    if (track->duration_s < window_s) return error_reply(422, "query_too_short", "track " + id + " is too short");
    if (!std::isfinite(offset) || offset < 0.0 || offset > track->duration_s - window_s + 1e-9) {
      return error_reply(400, "bad_request", "offset must lie in [0, duration - clip length]");
    }
    return run([&] {
      const auto audio = pipeline::load_track_audio(*track);
      return index::search_by_track(index_, model_, pipeline::extract_clip(audio, offset, model_.arch.clip_samples),
                                    k, exclude);
    }, k);
  }

  HttpReply search_upload(std::span<const std::uint8_t> wav, const std::string& k_text,
                          const std::string& exclude_text) const {
    if (wav.size() > config_.max_upload_bytes) return error_reply(413, "payload_too_large", "upload too large");
    std::size_t k = config_.default_k;
    if (!k_text.empty()) {
      const auto v = parse_number(k_text);
      if (!v || *v != std::floor(*v) || *v < 1 || *v > static_cast<double>(config_.max_k)) return bad_k();
      k = static_cast<std::size_t>(*v);
    }
    std::optional<std::string> exclude;
    if (!exclude_text.empty()) exclude = exclude_text;
    return run([&] {
      const auto decoded = dsp::decode_wav(wav);
      return index::search_by_track(index_, model_, dsp::resample_to_mono(decoded, dsp::kModelSampleRate), k,
                                    exclude);
    }, k);
  }

  /// WAV bytes of [offset, offset + dur) seconds of a catalog track at its
  /// native rate, clamped to the track's end.
  HttpReply audio(const std::string& track_id, const std::string& offset_text, const std::string& dur_text) const {
    const auto* track = catalog_.find(track_id);
    if (track == nullptr) return error_reply(404, "unknown_track", "unknown track " + track_id);
    const auto offset = offset_text.empty() ? std::optional<double>(0.0) : parse_number(offset_text);
    const auto dur = dur_text.empty() ? std::optional<double>(pipeline::kClipSeconds) : parse_number(dur_text);
    if (!offset || !dur || *offset < 0.0 || *dur <= 0.0 || *dur > kMaxAudioSeconds) {
      return error_reply(400, "bad_request", "offset must be >= 0 and dur in (0, 60]");
    }
    try {
      const auto info = dsp::read_wav_info(track->audio_path);
      const auto first = static_cast<std::size_t>(std::llround(*offset * info.sample_rate));
      if (first >= info.frames) return error_reply(400, "bad_request", "offset is past the end of the track");
      const auto count = static_cast<std::size_t>(std::llround(*dur * info.sample_rate));
      const auto segment = dsp::read_wav_segment(track->audio_path, first, count);
      const auto bytes = dsp::encode_wav(segment);
      return {200, "audio/wav", std::string(bytes.begin(), bytes.end())};
    } catch (const Error& e) {
      return error_reply(500, to_string(e.code()), e.what());
    }
  }

  static constexpr double kMaxAudioSeconds = 60.0;

 private:
  HttpReply bad_k() const {
    return error_reply(400, "bad_request", "k must be an integer in [1, " + std::to_string(config_.max_k) + "]");
  }

  template <typename F>
  HttpReply run(F&& search, std::size_t k) const {
    try {
      nlohmann::json results = nlohmann::json::array();
      for (const auto& r : search()) {
        results.push_back({{"rank", r.rank},
                           {"track_id", r.clip.track_id},
                           {"clip_index", r.clip.index},
                           {"offset_s", r.clip.offset_s},
                           {"distance", r.distance},
                           {"genre", r.genre},
                           {"mood", r.mood}});
      }
      return json_reply({{"k", k}, {"model_fingerprint", to_hex(fingerprint_)}, {"results", results}});
    } catch (const Error& e) {
      return reply_for(e);
    }
  }

  pipeline::Catalog catalog_;
  nn::EncoderModel<float> model_;
  index::EmbeddingIndex index_;
  ServiceConfig config_;
  Digest fingerprint_;
};

inline void apply(const HttpReply& reply, httplib::Response& res) {
  res.status = reply.status;
  res.set_content(reply.body, reply.content_type);
}

/// Registers the API routes. Requests above the upload limit are refused
/// with 413 before their body is read.
inline void mount(httplib::Server& server, const SearchService& service) {
  server.set_payload_max_length(service.config().max_upload_bytes);
  server.Get("/api/health", [&service](const httplib::Request&, httplib::Response& res) {
    apply(service.health(), res);
  });
  server.Get("/api/tracks", [&service](const httplib::Request& req, httplib::Response& res) {
    apply(service.tracks(req.get_param_value("split")), res);
  });
  server.Get(R"(/api/audio/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    apply(service.audio(req.matches[1], req.get_param_value("offset"), req.get_param_value("dur")), res);
  });
  server.Post("/api/search", [&service](const httplib::Request& req, httplib::Response& res) {
    if (req.is_multipart_form_data()) {
      if (!req.has_file("audio")) {
        apply(error_reply(400, "bad_request", "multipart upload needs an 'audio' file field"), res);
        return;
      }
      const auto& file = req.get_file_value("audio").content;
      const auto field = [&req](const char* name) {
        return req.has_file(name) ? req.get_file_value(name).content : std::string();
      };
      apply(service.search_upload(
                std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(file.data()), file.size()),
                field("k"), field("exclude_track")),
            res);
      return;
    }
    apply(service.search_json(req.body), res);
  });
  // Fills in a JSON body for errors raised by httplib itself (unknown
  // routes, oversized payloads).
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 413 ? "payload_too_large" : res.status == 404 ? "not_found" : "bad_request";
    res.set_content(nlohmann::json{{"error", httplib::status_message(res.status)}, {"code", code}}.dump(),
                    "application/json");
  });
}

}  // namespace sse::app
