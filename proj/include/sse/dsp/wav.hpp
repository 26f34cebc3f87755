#pragma once

// RIFF/WAVE reading and writing. Reads 16-bit PCM and 32-bit float, 1-2
// channels, little-endian; writes either encoding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sse/core/binary_io.hpp"
#include "sse/core/error.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::dsp {

enum class WavEncoding { Pcm16, Float32 };

struct WavInfo {
  int channels = 0;
  int sample_rate = 0;
  WavEncoding encoding = WavEncoding::Pcm16;
  std::size_t data_offset = 0;  // byte offset of the first sample frame
  std::size_t frames = 0;
  std::size_t data_bytes = 0;  // as declared by the data chunk header

  int bytes_per_sample() const { return encoding == WavEncoding::Pcm16 ? 2 : 4; }
  double duration() const { return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0; }
};

namespace detail {

inline WavInfo parse_wav_header(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::AudioFormatError);
  if (r.get_raw(4) != "RIFF") r.fail("missing RIFF tag");
  r.get<std::uint32_t>();
  if (r.get_raw(4) != "WAVE") r.fail("missing WAVE tag");

  WavInfo info;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::string id = r.get_raw(4);
    const auto size = r.get<std::uint32_t>();
    if (id == "fmt ") {
      if (size < 16) r.fail("fmt chunk too small");
      auto format = r.get<std::uint16_t>();
      info.channels = r.get<std::uint16_t>();
      info.sample_rate = static_cast<int>(r.get<std::uint32_t>());
      r.get<std::uint32_t>();  // byte rate
      r.get<std::uint16_t>();  // block align
      const auto bits = r.get<std::uint16_t>();
      std::size_t consumed = 16;
      if (format == 0xFFFE && size >= 40) {
        r.get<std::uint16_t>();  // cbSize
        r.get<std::uint16_t>();  // valid bits
        r.get<std::uint32_t>();  // channel mask
        format = r.get<std::uint16_t>();
        r.get_raw(14);
        consumed = 40;
      }
      r.get_raw(size - consumed + (size & 1u));
      if (format == 1 && bits == 16) {
        info.encoding = WavEncoding::Pcm16;
      } else if (format == 3 && bits == 32) {
        info.encoding = WavEncoding::Float32;
      } else {
        r.fail("unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) + " bits");
      }
      if (info.channels < 1 || info.channels > 2) r.fail("unsupported channel count " + std::to_string(info.channels));
      if (info.sample_rate <= 0) r.fail("invalid sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) r.fail("data chunk before fmt chunk");
      info.data_offset = r.position();
      info.data_bytes = size;
      const std::size_t avail = std::min<std::size_t>(size, r.remaining());
      info.frames = avail / (static_cast<std::size_t>(info.channels) * info.bytes_per_sample());
      return info;
    } else {
      r.get_raw(size + (size & 1u));
    }
  }
  r.fail("no data chunk");
}

inline float decode_sample(const std::uint8_t* p, WavEncoding enc) {
  if (enc == WavEncoding::Pcm16) {
    std::int16_t v;
    std::memcpy(&v, p, 2);
    return static_cast<float>(v) / 32768.0f;
  }
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

inline AudioBuffer decode_frames(const WavInfo& info, const std::uint8_t* data, std::size_t frames) {
  AudioBuffer out;
  out.sample_rate = info.sample_rate;
  out.channels.assign(static_cast<std::size_t>(info.channels), std::vector<float>(frames));
  const std::size_t bps = static_cast<std::size_t>(info.bytes_per_sample());
  const std::size_t stride = bps * static_cast<std::size_t>(info.channels);
  for (std::size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < info.channels; ++c) {
      const float v = decode_sample(data + i * stride + static_cast<std::size_t>(c) * bps, info.encoding);
      if (!std::isfinite(v)) throw Error(ErrorCode::AudioFormatError, "non-finite sample");
      out.channels[static_cast<std::size_t>(c)][i] = v;
    }
  }
  return out;
}

}  // namespace detail

inline WavInfo parse_wav_info(std::span<const std::uint8_t> bytes) { return detail::parse_wav_header(bytes); }

inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  const WavInfo info = detail::parse_wav_header(bytes);
  return detail::decode_frames(info, bytes.data() + info.data_offset, info.frames);
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path, ErrorCode::AudioFormatError);
  return decode_wav(bytes);
}

/// Reads only the header (first 64 KiB is plenty for any sane chunk layout).
inline WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::AudioFormatError, "cannot open " + path.string());
  std::vector<std::uint8_t> head(65536);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::size_t>(in.tellg());
  WavInfo info = detail::parse_wav_header(head);
  // The header parse only saw the prefix; recompute frames from the file size.
  const std::size_t stride = static_cast<std::size_t>(info.channels) * info.bytes_per_sample();
  info.frames = std::min(info.data_bytes, file_size - info.data_offset) / stride;
  return info;
}

/// Reads frames [first, first + count) without decoding the whole file.
inline AudioBuffer read_wav_segment(const std::filesystem::path& path, std::size_t first, std::size_t count) {
  const WavInfo info = read_wav_info(path);
  if (first > info.frames) throw Error(ErrorCode::AudioFormatError, "segment starts past end of " + path.string());
  count = std::min(count, info.frames - first);
  const std::size_t stride = static_cast<std::size_t>(info.channels) * info.bytes_per_sample();
  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(info.data_offset + first * stride));
  std::vector<std::uint8_t> raw(count * stride);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorCode::AudioFormatError, "short read in " + path.string());
  }
  return detail::decode_frames(info, raw.data(), count);
}

inline std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding enc = WavEncoding::Pcm16) {
  const auto channels = static_cast<std::uint16_t>(audio.channels.size());
  require(channels >= 1 && channels <= 2, ErrorCode::AudioFormatError, "can only write 1-2 channels");
  const std::uint16_t bps = enc == WavEncoding::Pcm16 ? 2 : 4;
  const std::size_t frames = audio.frames();
  const auto data_bytes = static_cast<std::uint32_t>(frames * channels * bps);

  ByteWriter w;
  w.put_raw("RIFF");
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_raw("WAVE");
  w.put_raw("fmt ");
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(enc == WavEncoding::Pcm16 ? 1 : 3);
  w.put<std::uint16_t>(channels);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(audio.sample_rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(audio.sample_rate) * channels * bps);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(channels * bps));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(bps * 8));
  w.put_raw("data");
  w.put<std::uint32_t>(data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : audio.channels) {
      if (enc == WavEncoding::Pcm16) {
        const float clamped = std::clamp(ch[i], -1.0f, 1.0f);
        w.put<std::int16_t>(static_cast<std::int16_t>(std::lround(clamped * 32767.0f)));
      } else {
        w.put<float>(ch[i]);
      }
    }
  }
  return w.take();
}

inline std::vector<std::uint8_t> encode_wav(const Waveform& wave, WavEncoding enc = WavEncoding::Pcm16) {
  AudioBuffer buf;
  buf.sample_rate = wave.sample_rate;
  buf.channels.push_back(wave.samples);
  return encode_wav(buf, enc);
}

inline void write_wav(const std::filesystem::path& path, const Waveform& wave,
                      WavEncoding enc = WavEncoding::Pcm16) {
  write_file_bytes(path, encode_wav(wave, enc));
}

}  // namespace sse::dsp
