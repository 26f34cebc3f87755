#pragma once

// Embeddings file written by `embed` and read by `build-index`, little-endian:
// "SSEM", u32 version, u32 dimension, 32-byte model fingerprint, u64 record
// count, then per record: track id, u32 clip index, f64 offset seconds, u8
// split, genre, mood (strings as u32 length + UTF-8), dimension x f32, then a
// SHA-256 trailer.

#include <filesystem>
#include <vector>

#include "sse/core/binary_io.hpp"
#include "sse/index/index.hpp"
#include "sse/nn/model_io.hpp"
#include "sse/pipeline/clips.hpp"

namespace sse::app {

inline constexpr char kEmbeddingsMagic[4] = {'S', 'S', 'E', 'M'};
inline constexpr std::uint32_t kEmbeddingsFormatVersion = 1;

struct EmbeddingsFile {
  Digest fingerprint{};
  std::vector<index::EmbeddingRecord> records;
  std::vector<pipeline::Split> splits;  // one per record
};

/// Every pre-sampled clip of every track, in catalog order.
inline EmbeddingsFile embed_catalog(const nn::EncoderModel<float>& model, const pipeline::Catalog& catalog,
                                    std::uint64_t seed, pipeline::AudioStore& audio, std::size_t batch = 16) {
  EmbeddingsFile out;
  out.fingerprint = nn::model_fingerprint(model);
  std::vector<dsp::Waveform> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    const auto emb = nn::encode(model, std::span<const dsp::Waveform>(pending));
    const std::size_t dim = emb.dim(1), first = out.records.size() - pending.size();
    for (std::size_t i = 0; i < pending.size(); ++i) {
      out.records[first + i].embedding.assign(emb.data() + i * dim, emb.data() + (i + 1) * dim);
    }
    pending.clear();
  };
  for (const auto& t : catalog.tracks()) {
    const auto split = pipeline::assign_split(t.track_id);
    for (const auto& c : pipeline::sample_track_clips(t, seed)) {
      out.records.push_back({c, t.genre, t.mood, {}});
      out.splits.push_back(split);
      pending.push_back(audio.clip(c, model.arch.clip_samples));
      if (pending.size() == batch) flush();
    }
    audio.evict(t.track_id);
  }
  flush();
  return out;
}

inline std::vector<std::uint8_t> serialize_embeddings(const EmbeddingsFile& f) {
  require(f.records.size() == f.splits.size(), ErrorCode::ShapeMismatch, "every record needs a split");
  const std::size_t dim = f.records.empty() ? 0 : f.records.front().embedding.size();
  ByteWriter w;
  w.put_raw(std::string_view(kEmbeddingsMagic, 4));
  w.put(kEmbeddingsFormatVersion);
  w.put(static_cast<std::uint32_t>(dim));
  w.put_bytes(f.fingerprint);
  w.put(static_cast<std::uint64_t>(f.records.size()));
  for (std::size_t i = 0; i < f.records.size(); ++i) {
    const auto& r = f.records[i];
    require(r.embedding.size() == dim, ErrorCode::ShapeMismatch, "records differ in dimension");
    w.put_string(r.clip.track_id);
    w.put(static_cast<std::uint32_t>(r.clip.index));
    w.put(r.clip.offset_s);
    w.put(static_cast<std::uint8_t>(f.splits[i]));
    w.put_string(r.genre);
    w.put_string(r.mood);
    w.put_f32_array(r.embedding);
  }
  return seal(w.take());
}

inline EmbeddingsFile deserialize_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader r(unseal(bytes, ErrorCode::IndexLoadError), ErrorCode::IndexLoadError);
  if (r.get_raw(4) != std::string_view(kEmbeddingsMagic, 4)) r.fail("bad embeddings magic");
  if (r.get<std::uint32_t>() != kEmbeddingsFormatVersion) r.fail("unsupported embeddings format version");
  const auto dim = r.get<std::uint32_t>();
  EmbeddingsFile f;
  const auto raw = r.get_raw(f.fingerprint.size());
  std::copy(raw.begin(), raw.end(), f.fingerprint.begin());
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining() / (25 + 4 * static_cast<std::uint64_t>(dim))) r.fail("implausible record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    index::EmbeddingRecord rec;
    rec.clip.track_id = r.get_string();
    rec.clip.index = r.get<std::uint32_t>();
    rec.clip.offset_s = r.get<double>();
    const auto split = r.get<std::uint8_t>();
    if (split > 2) r.fail("invalid split tag");
    rec.genre = r.get_string();
    rec.mood = r.get_string();
    rec.embedding.resize(dim);
    r.get_f32_array(rec.embedding);
    f.records.push_back(std::move(rec));
    f.splits.push_back(static_cast<pipeline::Split>(split));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last record");
  return f;
}

inline void save_embeddings(const EmbeddingsFile& f, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_embeddings(f));
}

inline EmbeddingsFile load_embeddings(const std::filesystem::path& path) {
  return deserialize_embeddings(read_file_bytes(path, ErrorCode::IndexLoadError));
}

/// Index over the records of the given splits (all of them by default).
inline index::EmbeddingIndex index_from_embeddings(const EmbeddingsFile& f,
                                                   const std::vector<pipeline::Split>& splits = {
                                                       pipeline::Split::Train, pipeline::Split::Validation,
                                                       pipeline::Split::Test}) {
  std::vector<index::EmbeddingRecord> chosen;
  for (std::size_t i = 0; i < f.records.size(); ++i) {
    if (std::find(splits.begin(), splits.end(), f.splits[i]) != splits.end()) chosen.push_back(f.records[i]);
  }
  return index::build_index(std::move(chosen), f.fingerprint);
}

}  // namespace sse::app
