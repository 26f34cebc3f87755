#pragma once

// Model file: "SSE1", u32 format version, u32-length-prefixed architecture
// JSON, u32 tensor count, then each tensor as u32 rank, u32 dims[rank] and
// f32 values. Learned parameters come first (declaration order), followed by
// the batch-norm running statistics, and a 32-byte SHA-256 of the preceding
// bytes. All little-endian. The optimizer sidecar ends the same way.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "sse/core/binary_io.hpp"
#include "sse/core/sha256.hpp"
#include "sse/nn/adam.hpp"
#include "sse/nn/encoder.hpp"

namespace sse::nn {

inline constexpr char kModelMagic[4] = {'S', 'S', 'E', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kAdamMagic[4] = {'S', 'S', 'A', 'D'};
inline constexpr std::uint32_t kAdamFormatVersion = 1;

namespace detail {

inline void put_tensor(ByteWriter& w, const Tensor<float>& t) {
  w.put(static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) w.put(static_cast<std::uint32_t>(d));
  w.put_f32_array(t.values);
}

inline void get_tensor_into(ByteReader& r, Tensor<float>& t) {
  const auto rank = r.get<std::uint32_t>();
  if (rank != t.shape.size()) r.fail("tensor rank " + std::to_string(rank) + " does not match the architecture");
  for (std::size_t i = 0; i < rank; ++i) {
    if (r.get<std::uint32_t>() != t.shape[i]) r.fail("tensor shape does not match the architecture");
  }
  r.get_f32_array(t.values);
  for (float v : t.values) {
    if (!std::isfinite(v)) r.fail("non-finite parameter value");
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const EncoderModel<float>& model) {
  ByteWriter w;
  w.put_raw(std::string_view(kModelMagic, 4));
  w.put(kModelFormatVersion);
  w.put_string(nlohmann::json(model.arch).dump());
  w.put(static_cast<std::uint32_t>(model.params.size() + model.buffers.size()));
  for (const auto& p : model.params) detail::put_tensor(w, p);
  for (const auto& b : model.buffers) detail::put_tensor(w, b);
  return seal(w.take());
}

inline EncoderModel<float> deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(unseal(bytes, ErrorCode::ModelLoadError), ErrorCode::ModelLoadError);
  if (r.get_raw(4) != std::string_view(kModelMagic, 4)) r.fail("bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) r.fail("unsupported model format version " + std::to_string(version));
  EncoderArch arch;
  try {
    arch = nlohmann::json::parse(r.get_string()).get<EncoderArch>();
    validate(arch);
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("malformed architecture descriptor: ") + e.what());
  } catch (const Error& e) {
    r.fail(std::string("invalid architecture: ") + e.what());
  }
  EncoderModel<float> model = init_encoder<float>(arch, 0);
  const auto count = r.get<std::uint32_t>();
  if (count != model.params.size() + model.buffers.size()) r.fail("unexpected tensor count");
  for (auto& p : model.params) detail::get_tensor_into(r, p);
  for (auto& b : model.buffers) detail::get_tensor_into(r, b);
  if (r.remaining() != 0) r.fail("trailing bytes after the last tensor");
  model.touch();
  return model;
}

inline void save_model(const EncoderModel<float>& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_model(model));
}

inline EncoderModel<float> load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file_bytes(path, ErrorCode::ModelLoadError));
}

/// SHA-256 of the serialized model; identifies the encoder behind an index.
inline Digest model_fingerprint(const EncoderModel<float>& model) { return sha256(serialize_model(model)); }

inline std::vector<std::uint8_t> serialize_adam(const AdamState<float>& s) {
  ByteWriter w;
  w.put_raw(std::string_view(kAdamMagic, 4));
  w.put(kAdamFormatVersion);
  w.put(s.t);
  w.put(s.learning_rate);
  w.put(s.beta1);
  w.put(s.beta2);
  w.put(s.eps);
  w.put(static_cast<std::uint32_t>(s.m.size()));
  for (const auto& t : s.m) detail::put_tensor(w, t);
  for (const auto& t : s.v) detail::put_tensor(w, t);
  return seal(w.take());
}

/// The optimizer sidecar must match the model it was saved with.
inline AdamState<float> deserialize_adam(std::span<const std::uint8_t> bytes, const EncoderModel<float>& model) {
  ByteReader r(unseal(bytes, ErrorCode::ModelLoadError), ErrorCode::ModelLoadError);
  if (r.get_raw(4) != std::string_view(kAdamMagic, 4)) r.fail("bad optimizer magic");
  if (r.get<std::uint32_t>() != kAdamFormatVersion) r.fail("unsupported optimizer format version");
  AdamState<float> s = make_adam(model.params);
  s.t = r.get<std::uint64_t>();
  s.learning_rate = r.get<double>();
  s.beta1 = r.get<double>();
  s.beta2 = r.get<double>();
  s.eps = r.get<double>();
  if (r.get<std::uint32_t>() != model.params.size()) r.fail("optimizer state does not match the model");
  for (auto& t : s.m) detail::get_tensor_into(r, t);
  for (auto& t : s.v) detail::get_tensor_into(r, t);
  if (r.remaining() != 0) r.fail("trailing bytes in optimizer state");
  return s;
}

inline std::filesystem::path adam_sidecar_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".adam";
  return p;
}

}  // namespace sse::nn
