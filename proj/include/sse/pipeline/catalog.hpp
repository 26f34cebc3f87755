#pragma once

// Track catalog and its line-delimited JSON manifest. One object per line
// with keys track_id, audio_path, genre, mood, duration_s. Relative audio
// paths are resolved against the manifest's directory.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sse/core/error.hpp"
#include "sse/dsp/wav.hpp"

namespace sse::pipeline {

inline constexpr double kClipSeconds = 10.0;
inline constexpr double kDurationTolerance = 0.1;

struct TrackMeta {
  std::string track_id;
  std::string genre;
  std::string mood;
  std::filesystem::path audio_path;
  double duration_s = 0.0;
};

inline void to_json(nlohmann::json& j, const TrackMeta& t) {
  j = nlohmann::json{{"track_id", t.track_id},
                     {"audio_path", t.audio_path.generic_string()},
                     {"genre", t.genre},
                     {"mood", t.mood},
                     {"duration_s", t.duration_s}};
}

inline void from_json(const nlohmann::json& j, TrackMeta& t) {
  j.at("track_id").get_to(t.track_id);
  t.audio_path = j.at("audio_path").get<std::string>();
  j.at("genre").get_to(t.genre);
  j.at("mood").get_to(t.mood);
  j.at("duration_s").get_to(t.duration_s);
}

class Catalog {
 public:
  Catalog() = default;

  explicit Catalog(std::vector<TrackMeta> tracks) : tracks_(std::move(tracks)) {
    std::set<std::string> genres, moods;
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      const auto& t = tracks_[i];
      require(!t.track_id.empty(), ErrorCode::InvalidId, "empty track id in catalog");
      require(std::isfinite(t.duration_s) && t.duration_s > 0.0, ErrorCode::InvalidConfig,
              "track " + t.track_id + " has a non-positive duration");
      require(by_id_.emplace(t.track_id, i).second, ErrorCode::DuplicateRecord, "duplicate track id " + t.track_id);
      genres.insert(t.genre);
      moods.insert(t.mood);
    }
    genres_.assign(genres.begin(), genres.end());
    moods_.assign(moods.begin(), moods.end());
  }

  const std::vector<TrackMeta>& tracks() const { return tracks_; }
  std::size_t size() const { return tracks_.size(); }
  bool empty() const { return tracks_.empty(); }
  const std::vector<std::string>& genres() const { return genres_; }
  const std::vector<std::string>& moods() const { return moods_; }

  const TrackMeta* find(const std::string& id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &tracks_[it->second];
  }

  const TrackMeta& at(const std::string& id) const {
    const auto* t = find(id);
    require(t != nullptr, ErrorCode::InvalidId, "unknown track id " + id);
    return *t;
  }

 private:
  std::vector<TrackMeta> tracks_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<std::string> genres_;
  std::vector<std::string> moods_;
};

inline Catalog read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<TrackMeta> tracks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto t = nlohmann::json::parse(line).get<TrackMeta>();
      if (t.audio_path.is_relative()) t.audio_path = base / t.audio_path;
      tracks.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig,
                  path.string() + ":" + std::to_string(line_no) + ": malformed manifest record: " + e.what());
    }
  }
  return Catalog(std::move(tracks));
}

/// Audio paths inside `dir` are written relative to it.
inline void write_manifest(const Catalog& catalog, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot write manifest " + path.string());
  for (auto t : catalog.tracks()) {
    if (!base.empty()) {
      const auto rel = t.audio_path.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") t.audio_path = rel;
    }
    out << nlohmann::json(t).dump() << '\n';
  }
  require(out.good(), ErrorCode::IoError, "failed writing manifest " + path.string());
}

struct IngestIssue {
  std::string track_id;
  std::string message;
};

/// Checks every track's WAV header against its declared duration.
inline std::vector<IngestIssue> validate_audio(const Catalog& catalog) {
  std::vector<IngestIssue> issues;
  for (const auto& t : catalog.tracks()) {
    try {
      const auto info = dsp::read_wav_info(t.audio_path);
      const double actual = static_cast<double>(info.frames) / info.sample_rate;
      if (std::abs(actual - t.duration_s) > kDurationTolerance) {
        issues.push_back({t.track_id, "declared " + std::to_string(t.duration_s) + " s but audio holds " +
                                          std::to_string(actual) + " s"});
      }
    } catch (const Error& e) {
      issues.push_back({t.track_id, e.what()});
    }
  }
  return issues;
}

}  // namespace sse::pipeline
