#pragma once

// Exact Euclidean kNN over clip embeddings.
//
// Index file, little-endian: "SSIX", u32 version, u32 dimension, 32-byte
// model fingerprint, u64 record count, then per record: track id (u32
// length + UTF-8), u32 clip index, f32 offset seconds, genre and mood (u32
// length + UTF-8), dimension x f32. A SHA-256 of everything before it closes
// the file.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "sse/core/binary_io.hpp"
#include "sse/core/sha256.hpp"
#include "sse/nn/encoder.hpp"
#include "sse/pipeline/clips.hpp"

namespace sse::index {

inline constexpr char kIndexMagic[4] = {'S', 'S', 'I', 'X'};
inline constexpr std::uint32_t kIndexFormatVersion = 1;
inline constexpr double kUnitTolerance = 1e-4;

struct EmbeddingRecord {
  pipeline::ClipRef clip;
  std::string genre;
  std::string mood;
  std::vector<float> embedding;
};

struct QueryResult {
  pipeline::ClipRef clip;
  std::string genre;
  std::string mood;
  double distance = 0.0;
  std::size_t rank = 0;  // 1-based
};

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t dim() const { return dim_; }
  const Digest& fingerprint() const { return fingerprint_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  friend EmbeddingIndex build_index(std::vector<EmbeddingRecord> records, const Digest& fingerprint);

 private:
  std::vector<EmbeddingRecord> records_;
  std::size_t dim_ = 0;
  Digest fingerprint_{};
};

/// Keeps insertion order. Offsets are rounded to f32 so that a saved index
/// reloads bit-exactly.
inline EmbeddingIndex build_index(std::vector<EmbeddingRecord> records, const Digest& fingerprint) {
  require(!records.empty(), ErrorCode::EmptyIndex, "an index needs at least one record");
  require(fingerprint != Digest{}, ErrorCode::InvalidConfig, "index fingerprint must be non-empty");
  const std::size_t dim = records.front().embedding.size();
  require(dim > 0, ErrorCode::ShapeMismatch, "embeddings must be non-empty");
  std::map<std::pair<std::string, std::size_t>, std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    require(r.embedding.size() == dim, ErrorCode::ShapeMismatch,
            "record " + r.clip.key() + " has dimension " + std::to_string(r.embedding.size()) + ", expected " +
                std::to_string(dim));
    double norm = 0.0;
    for (float v : r.embedding) {
      require(std::isfinite(v), ErrorCode::InvalidEmbedding, "record " + r.clip.key() + " is not finite");
      norm += static_cast<double>(v) * v;
    }
    require(std::abs(std::sqrt(norm) - 1.0) <= kUnitTolerance, ErrorCode::InvalidEmbedding,
            "record " + r.clip.key() + " is not unit-norm");
    require(seen.emplace(std::make_pair(r.clip.track_id, r.clip.index), i).second, ErrorCode::DuplicateRecord,
            "clip " + r.clip.key() + " appears twice");
    r.clip.offset_s = static_cast<float>(r.clip.offset_s);
  }
  EmbeddingIndex index;
  index.records_ = std::move(records);
  index.dim_ = dim;
  index.fingerprint_ = fingerprint;
  return index;
}

inline double euclidean(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Exact top-k by a bounded max-heap over (distance, insertion position).
inline std::vector<QueryResult> knn(const EmbeddingIndex& index, std::span<const float> query, std::size_t k,
                                    const std::optional<std::string>& exclude_track = std::nullopt) {
  require(!index.empty(), ErrorCode::EmptyIndex, "the index holds no records");
  require(k >= 1, ErrorCode::InvalidConfig, "k must be at least 1");
  require(query.size() == index.dim(), ErrorCode::ShapeMismatch,
          "query has dimension " + std::to_string(query.size()) + ", index has " + std::to_string(index.dim()));
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> heap;
  const auto& records = index.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (exclude_track && records[i].clip.track_id == *exclude_track) continue;
    const Entry e{euclidean(query, records[i].embedding), i};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<Entry> top;
  while (!heap.empty()) {
    top.push_back(heap.top());
    heap.pop();
  }
  std::reverse(top.begin(), top.end());
  std::vector<QueryResult> out;
  for (std::size_t r = 0; r < top.size(); ++r) {
    const auto& rec = records[top[r].second];
    out.push_back({rec.clip, rec.genre, rec.mood, top[r].first, r + 1});
  }
  return out;
}

/// Window starts (in samples) for a query of n samples: every half window.
inline std::vector<std::size_t> window_starts(std::size_t n, std::size_t window) {
  require(n >= window, ErrorCode::QueryTooShort,
          "query holds " + std::to_string(n) + " samples, at least " + std::to_string(window) + " are needed");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= n; s += window / 2) starts.push_back(s);
  return starts;
}

/// Embeds each window of the query, runs knn per window and keeps each
/// candidate's smallest distance; returns the global top-k.
inline std::vector<QueryResult> search_by_track(const EmbeddingIndex& index, const nn::EncoderModel<float>& model,
                                                const dsp::Waveform& wave, std::size_t k,
                                                const std::optional<std::string>& exclude_track = std::nullopt) {
  require(!index.empty(), ErrorCode::EmptyIndex, "the index holds no records");
  const dsp::Waveform audio =
      wave.sample_rate == dsp::kModelSampleRate ? wave : dsp::resample_to_mono(wave, dsp::kModelSampleRate);
  const std::size_t window = model.arch.clip_samples;
  const auto starts = window_starts(audio.size(), window);
  std::vector<dsp::Waveform> windows;
  for (auto s : starts) {
    windows.push_back({std::vector<float>(audio.samples.begin() + static_cast<long>(s),
                                          audio.samples.begin() + static_cast<long>(s + window)),
                       dsp::kModelSampleRate});
  }

  std::map<std::pair<std::string, std::size_t>, std::size_t> position;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& c = index.records()[i].clip;
    position[{c.track_id, c.index}] = i;
  }
  std::map<std::size_t, QueryResult> best;  // keyed by insertion position
  constexpr std::size_t kBatch = 8;
  for (std::size_t first = 0; first < windows.size(); first += kBatch) {
    const auto count = std::min(kBatch, windows.size() - first);
    const auto emb = nn::encode(model, std::span<const dsp::Waveform>(windows.data() + first, count));
    const std::size_t dim = emb.dim(1);
    for (std::size_t w = 0; w < count; ++w) {
      const std::span<const float> q(emb.data() + w * dim, dim);
      for (auto& r : knn(index, q, k, exclude_track)) {
        const auto pos = position.at({r.clip.track_id, r.clip.index});
        auto it = best.find(pos);
        if (it == best.end()) {
          best.emplace(pos, std::move(r));
        } else if (r.distance < it->second.distance) {
          it->second.distance = r.distance;
        }
      }
    }
  }
  std::vector<std::pair<double, std::size_t>> order;
  for (const auto& [pos, r] : best) order.emplace_back(r.distance, pos);
  std::sort(order.begin(), order.end());
  std::vector<QueryResult> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    auto r = best.at(order[i].second);
    r.rank = i + 1;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<std::uint8_t> serialize_index(const EmbeddingIndex& index) {
  ByteWriter w;
  w.put_raw(std::string_view(kIndexMagic, 4));
  w.put(kIndexFormatVersion);
  w.put(static_cast<std::uint32_t>(index.dim()));
  w.put_bytes(index.fingerprint());
  w.put(static_cast<std::uint64_t>(index.size()));
  for (const auto& r : index.records()) {
    w.put_string(r.clip.track_id);
    w.put(static_cast<std::uint32_t>(r.clip.index));
    w.put(static_cast<float>(r.clip.offset_s));
    w.put_string(r.genre);
    w.put_string(r.mood);
    w.put_f32_array(r.embedding);
  }
  return seal(w.take());
}

/// With `expected` set, a different fingerprint raises FingerprintMismatch
/// unless `allow_mismatch` is given.
inline EmbeddingIndex deserialize_index(std::span<const std::uint8_t> bytes,
                                        const std::optional<Digest>& expected = std::nullopt,
                                        bool allow_mismatch = false) {
  ByteReader r(unseal(bytes, ErrorCode::IndexLoadError), ErrorCode::IndexLoadError);
  if (r.get_raw(4) != std::string_view(kIndexMagic, 4)) r.fail("bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexFormatVersion) r.fail("unsupported index format version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0) r.fail("zero dimension");
  Digest fingerprint;
  const auto raw = r.get_raw(fingerprint.size());
  std::copy(raw.begin(), raw.end(), fingerprint.begin());
  const auto count = r.get<std::uint64_t>();
  // Every record needs at least its fixed-size fields.
  if (count == 0 || count > r.remaining() / (20 + 4 * static_cast<std::uint64_t>(dim))) {
    r.fail("implausible record count");
  }
  std::vector<EmbeddingRecord> records(static_cast<std::size_t>(count));
  for (auto& rec : records) {
    rec.clip.track_id = r.get_string();
    rec.clip.index = r.get<std::uint32_t>();
    rec.clip.offset_s = r.get<float>();
    if (!std::isfinite(rec.clip.offset_s) || rec.clip.offset_s < 0.0) r.fail("invalid clip offset");
    rec.genre = r.get_string();
    rec.mood = r.get_string();
    rec.embedding.resize(dim);
    r.get_f32_array(rec.embedding);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last record");
  EmbeddingIndex index;
  try {
    index = build_index(std::move(records), fingerprint);
  } catch (const Error& e) {
    throw Error(ErrorCode::IndexLoadError, std::string("invalid index contents: ") + e.what());
  }
  if (expected && *expected != index.fingerprint() && !allow_mismatch) {
    throw Error(ErrorCode::FingerprintMismatch,
                "index was built by model " + to_hex(index.fingerprint()) + ", not " + to_hex(*expected));
  }
  return index;
}

inline void save_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_index(index));
}

inline EmbeddingIndex load_index(const std::filesystem::path& path, const std::optional<Digest>& expected = std::nullopt,
                                 bool allow_mismatch = false) {
  return deserialize_index(read_file_bytes(path, ErrorCode::IndexLoadError), expected, allow_mismatch);
}

}  // namespace sse::index
